//! Gaussian naive Bayes pre-classifier.
//!
//! All density arithmetic is done in log space: with a few hundred features
//! the plain product of Gaussian densities underflows long before the
//! posterior becomes informative.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative gap under which two log-discriminants are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Feature vectors with their class indices in `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledInputs {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabelledInputs {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if inputs.len() != labels.len() {
            return Err(Error::Dimension { expected: inputs.len(), found: labels.len() });
        }
        let p = inputs[0].len();
        if let Some(x) = inputs.iter().find(|x| x.len() != p) {
            return Err(Error::Dimension { expected: p, found: x.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label, classes });
        }
        let mut counts = vec![0; classes];
        for &l in &labels {
            counts[l] += 1;
        }
        if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(Error::SmallClass { class, count });
        }
        Ok(Self { inputs, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub priors: Vec<f64>,
    /// `means[k][i]`
    pub means: Vec<Vec<f64>>,
    /// `vars[k][i]`, already floored.
    pub vars: Vec<Vec<f64>>,
}

fn sample_variance(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let ss: f64 = xs.map(|x| (x - mean) * (x - mean)).sum();
    (mean, if n > 1.0 { ss / (n - 1.0) } else { 0.0 })
}

/// Priors `n_k / n`, per-class sample means and Bessel-corrected variances.
pub fn fit(data: &LabelledInputs) -> Result<NaiveBayesModel> {
    let n = data.len();
    let p = data.features();
    let k = data.classes;
    let floors: Vec<f64> = (0..p)
        .map(|i| 1e-9 * sample_variance(data.inputs.iter().map(|x| x[i])).1 + 1e-300)
        .collect();
    let mut priors = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    for class in 0..k {
        let members: Vec<&Vec<f64>> =
            data.inputs.iter().zip(&data.labels).filter(|(_, &l)| l == class).map(|(x, _)| x).collect();
        priors.push(members.len() as f64 / n as f64);
        let (mu, var): (Vec<f64>, Vec<f64>) = (0..p)
            .map(|i| {
                let (m, v) = sample_variance(members.iter().map(|x| x[i]));
                (m, v.max(floors[i]))
            })
            .unzip();
        means.push(mu);
        vars.push(var);
    }
    Ok(NaiveBayesModel { priors, means, vars })
}

impl NaiveBayesModel {
    pub fn classes(&self) -> usize {
        self.priors.len()
    }

    pub fn features(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.features() {
            return Err(Error::Dimension { expected: self.features(), found: x.len() });
        }
        Ok(())
    }

    fn log_discriminant_unchecked(&self, x: &[f64], k: usize) -> f64 {
        let ll: f64 = x
            .iter()
            .zip(self.means[k].iter().zip(&self.vars[k]))
            .map(|(xi, (mu, var))| -0.5 * (LN_2PI + var.ln()) - (xi - mu) * (xi - mu) / (2.0 * var))
            .sum();
        self.priors[k].ln() + ll
    }

    /// `log pi_k + sum_i log N(x_i; mu_ik, var_ik)`.
    pub fn log_discriminant(&self, x: &[f64], k: usize) -> Result<f64> {
        self.check(x)?;
        if k >= self.classes() {
            return Err(Error::Label { label: k, classes: self.classes() });
        }
        Ok(self.log_discriminant_unchecked(x, k))
    }

    pub fn log_discriminants(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok((0..self.classes()).map(|k| self.log_discriminant_unchecked(x, k)).collect())
    }

    /// Posterior class probabilities (softmax of the log-discriminants).
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.log_discriminants(x)?;
        Ok(softmax(&g))
    }

    /// Maximum-posterior class; exact ties are broken uniformly at random.
    pub fn predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<usize> {
        let g = self.log_discriminants(x)?;
        Ok(*argmax_ties(&g).choose(rng).expect("at least one class"))
    }

    /// `class,prior,feature,mean,variance` rows, 1-based class and feature.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "class,prior,feature,mean,variance")?;
        for k in 0..self.classes() {
            for i in 0..self.features() {
                writeln!(out, "{},{},{},{},{}", k + 1, self.priors[k], i + 1, self.means[k][i], self.vars[k][i])?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut priors: Vec<f64> = Vec::new();
        let mut means: Vec<Vec<f64>> = Vec::new();
        let mut vars: Vec<Vec<f64>> = Vec::new();
        for (line_no, line) in input.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("model csv line {}: {line:?}", line_no + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let class: usize = f[0].parse().map_err(|_| bad())?;
            let feature: usize = f[2].parse().map_err(|_| bad())?;
            let prior: f64 = f[1].parse().map_err(|_| bad())?;
            let mean: f64 = f[3].parse().map_err(|_| bad())?;
            let var: f64 = f[4].parse().map_err(|_| bad())?;
            if class == 0 || feature == 0 || class > priors.len() + 1 {
                return Err(bad());
            }
            if class == priors.len() + 1 {
                priors.push(prior);
                means.push(Vec::new());
                vars.push(Vec::new());
            }
            if feature != means[class - 1].len() + 1 {
                return Err(bad());
            }
            means[class - 1].push(mean);
            vars[class - 1].push(var);
        }
        if priors.is_empty() {
            return Err(Error::Format("empty model csv".into()));
        }
        Ok(Self { priors, means, vars })
    }
}

fn softmax(g: &[f64]) -> Vec<f64> {
    let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = g.iter().map(|x| (x - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn argmax_ties(g: &[f64]) -> Vec<usize> {
    let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * top.abs();
    (0..g.len()).filter(|&k| g[k] >= top - tol).collect()
}

/// `counts[k][i]`: samples of true class `k` predicted as `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> usize {
        self.row_sums().iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hit: usize = (0..self.classes()).map(|k| self.counts[k][k]).sum();
        hit as f64 / self.total() as f64
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "true\\predicted")?;
        for i in 1..=self.classes() {
            write!(out, ",{i}")?;
        }
        writeln!(out)?;
        for (k, row) in self.counts.iter().enumerate() {
            write!(out, "{}", k + 1)?;
            for c in row {
                write!(out, ",{c}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension { expected: truth.len(), found: predicted.len() });
    }
    let mut counts = vec![vec![0; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= classes {
                return Err(Error::Label { label, classes });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// `sum_k pi_k sum_{i != k} n_ki / N_k`.
pub fn error_rate_estimate(cm: &ConfusionMatrix, priors: &[f64]) -> Result<f64> {
    if priors.len() != cm.classes() {
        return Err(Error::Dimension { expected: cm.classes(), found: priors.len() });
    }
    let rows = cm.row_sums();
    let mut rate = 0.0;
    for (k, (&pi, &nk)) in priors.iter().zip(&rows).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if nk == 0 {
            return Err(Error::UndefinedEstimate(k));
        }
        let wrong = nk - cm.counts[k][k];
        rate += pi * wrong as f64 / nk as f64;
    }
    Ok(rate)
}
