//! End-to-end experiment: generate ensembles, cluster and train the
//! classifier per `K`, evaluate reduced models under true and predicted
//! labels, and condense everything into a summary.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, RandomInput};
use crate::error::{Error, Result};
use crate::fom::{self, modified_ensemble, modified_state, FomConfig, LiftingData, TrigParams};
use crate::nbayes::{self, ConfusionMatrix, LabelledInputs, NaiveBayesModel};
use crate::pod::{pod_basis, select_dimension};
use crate::rom::{self, build_reduced, reconstruct_trajectory, solve_rom, true_label, ErrorRow, ErrorStats, ReducedOperators};
use crate::seeds;
use crate::tgcvt::{lloyd_tgcvt, LloydOptions, Tessellation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HatParams {
    /// Height `a` of sample `i` is `heights[i % heights.len()]`.
    pub heights: Vec<f64>,
    pub sigma: f64,
}

impl Default for HatParams {
    fn default() -> Self {
        Self { heights: vec![0.8, 0.9, 1.0, 1.1, 1.2], sigma: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorConfig {
    Trig(TrigParams),
    Hat(HatParams),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Trig(TrigParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fom: FomConfig,
    pub generator: GeneratorConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub k_list: Vec<usize>,
    pub energy_ratio: f64,
    pub restarts: usize,
    pub max_iter: usize,
    pub master_seed: u64,
    /// Fixed shared dimension instead of the energy-ratio rule.
    pub dim: Option<usize>,
    /// Per-cluster dimensions for selected `K` (keys are `K`).
    pub cluster_dims: BTreeMap<usize, Vec<usize>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fom: FomConfig::default(),
            generator: GeneratorConfig::default(),
            n_train: 60,
            n_test: 40,
            k_list: vec![1, 2, 3],
            energy_ratio: 0.97,
            restarts: 5,
            max_iter: 50,
            master_seed: 0,
            dim: None,
            cluster_dims: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.fom.validate()?;
        let bad = |msg: String| Err(Error::Invalid(msg));
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return bad("k_list must be nonempty with K >= 1".into());
        }
        let kmax = *self.k_list.iter().max().expect("nonempty");
        if self.n_train < 2 * kmax {
            return bad(format!("n_train = {} is below 2 max(K) = {}", self.n_train, 2 * kmax));
        }
        if self.n_test == 0 {
            return bad("n_test must be positive".into());
        }
        if !(self.energy_ratio > 0.0 && self.energy_ratio <= 1.0) {
            return bad("energy_ratio must lie in (0, 1]".into());
        }
        if self.max_iter == 0 || self.restarts == 0 {
            return bad("max_iter and restarts must be positive".into());
        }
        for (k, dims) in &self.cluster_dims {
            if dims.len() != *k || dims.contains(&0) {
                return bad(format!("cluster_dims for K = {k} needs {k} positive entries"));
            }
        }
        match &self.generator {
            GeneratorConfig::Hat(h) if h.heights.is_empty() || h.heights.iter().any(|a| !(*a > 0.0)) => {
                bad("hat heights must be positive and nonempty".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Train => seeds::INPUT_TRAIN,
            Split::Test => seeds::INPUT_TEST,
        }
    }

    pub fn size(self, config: &PipelineConfig) -> usize {
        match self {
            Split::Train => config.n_train,
            Split::Test => config.n_test,
        }
    }
}

/// Random input of sample `index` in `split`.
pub fn sample_input(config: &PipelineConfig, split: Split, index: usize) -> Result<RandomInput> {
    let seed = seeds::derive_seed(config.master_seed, split.tag(), index as u64);
    match &config.generator {
        GeneratorConfig::Trig(p) => fom::sample_trig(&config.fom, p, seed),
        GeneratorConfig::Hat(h) => fom::sample_hat(&config.fom, h.heights[index % h.heights.len()], h.sigma, seed),
    }
}

/// Full-order ensemble for one split; samples are solved in parallel.
pub fn generate_ensemble(config: &PipelineConfig, split: Split) -> Result<Ensemble> {
    config.validate()?;
    let trajectories = (0..split.size(config))
        .into_par_iter()
        .map(|i| {
            let input = sample_input(config, split, i)?;
            fom::solve_fom(&config.fom, &input).map_err(|e| e.at_sample(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(config.fom.grid()?, config.fom.time_grid()?, trajectories)
}

/// Clustering and classifier for one `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KModel {
    pub k: usize,
    pub dims: Vec<usize>,
    pub tessellation: Option<Tessellation>,
    pub classifier: Option<NaiveBayesModel>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArtifacts {
    pub lifting: LiftingData,
    /// Spectrum of all modified training snapshots (the `K = 1` spectrum).
    pub spectrum: Vec<f64>,
    pub dim: usize,
    pub models: Vec<KModel>,
}

impl TrainArtifacts {
    pub fn model(&self, k: usize) -> Option<&KModel> {
        self.models.iter().find(|m| m.k == k)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Seconds per `K`, keyed by `K`.
    pub per_k: BTreeMap<usize, f64>,
    pub total: f64,
}

fn cluster_seed(config: &PipelineConfig, k: usize) -> u64 {
    seeds::derive_seed(config.master_seed, seeds::CLUSTER_INIT, k as u64)
}

fn train_k(config: &PipelineConfig, modified: &Ensemble, k: usize, dim: usize) -> KModel {
    let dims = config.cluster_dims.get(&k).cloned().unwrap_or_else(|| vec![dim; k]);
    let options = LloydOptions { max_iter: config.max_iter, restarts: config.restarts };
    let tess = match lloyd_tgcvt(modified, k, &dims, options, cluster_seed(config, k)) {
        Ok(t) => t,
        Err(e) => return KModel { k, dims, tessellation: None, classifier: None, failure: Some(e.to_string()) },
    };
    let inputs = modified.trajectories.iter().map(|t| t.input.strength.clone()).collect();
    let classifier = LabelledInputs::new(inputs, tess.labels.clone(), k).and_then(|d| nbayes::fit(&d));
    match classifier {
        Ok(c) => KModel { k, dims, tessellation: Some(tess), classifier: Some(c), failure: None },
        Err(e) => KModel { k, dims, tessellation: Some(tess), classifier: None, failure: Some(e.to_string()) },
    }
}

/// Lifting, shared dimension, and one clustering plus classifier per `K`.
/// Failures of a single `K` are recorded in its model and do not stop the
/// others.
pub fn train(config: &PipelineConfig, train: &Ensemble) -> Result<(TrainArtifacts, Timings)> {
    config.validate()?;
    let start = Instant::now();
    let lifting = LiftingData::build(&config.fom, train)?;
    let modified = modified_ensemble(train, &lifting)?;
    let snaps: Vec<_> = modified.snapshots().collect();
    let full = pod_basis(&snaps, &modified.grid, 0)?;
    let spectrum = full.eigvals().to_vec();
    let dim = match config.dim {
        Some(d) => d,
        None => select_dimension(&spectrum, config.energy_ratio)?,
    };
    let results: Vec<(KModel, f64)> = config
        .k_list
        .par_iter()
        .map(|&k| {
            let t = Instant::now();
            let m = train_k(config, &modified, k, dim);
            (m, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut timings = Timings::default();
    let mut models = Vec::with_capacity(results.len());
    for (m, secs) in results {
        timings.per_k.insert(m.k, secs);
        models.push(m);
    }
    timings.total = start.elapsed().as_secs_f64();
    Ok((TrainArtifacts { lifting, spectrum, dim, models }, timings))
}

/// One labelling variant (true or predicted) of the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantErrors {
    pub stats: Option<ErrorStats>,
    /// Test samples whose reduced solve failed, with the reason.
    pub excluded: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEvaluation {
    pub k: usize,
    pub true_labels: Vec<usize>,
    pub predicted_labels: Vec<usize>,
    pub true_errors: VariantErrors,
    pub predicted_errors: VariantErrors,
    pub confusion: ConfusionMatrix,
    pub error_rate: Option<f64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_k: Vec<KEvaluation>,
    /// `K` values skipped because training failed, with the reason.
    pub skipped: Vec<(usize, String)>,
}

type SampleOutcome = (usize, usize, std::result::Result<(f64, f64), String>, std::result::Result<(f64, f64), String>);

fn rom_error(
    ops: &ReducedOperators,
    fom_traj: &crate::ensemble::Trajectory,
    test: &Ensemble,
) -> std::result::Result<(f64, f64), String> {
    let run = || -> Result<(f64, f64)> {
        let r = solve_rom(ops, &fom_traj.input)?;
        let rec = reconstruct_trajectory(&r, ops, fom_traj.len())?;
        rom::sample_error(fom_traj, &rec, &test.grid, test.time.dt())
    };
    run().map_err(|e| e.to_string())
}

fn variant(outcomes: &[std::result::Result<(f64, f64), String>]) -> VariantErrors {
    let mut abs = Vec::new();
    let mut rel = Vec::new();
    let mut excluded = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        match o {
            Ok((a, r)) => {
                abs.push(*a);
                rel.push(*r);
            }
            Err(e) => excluded.push((i, e.clone())),
        }
    }
    let stats = (!abs.is_empty()).then(|| rom::stats_from_samples(abs, rel));
    VariantErrors { stats, excluded }
}

fn evaluate_k(
    config: &PipelineConfig,
    artifacts: &TrainArtifacts,
    model: &KModel,
    test: &Ensemble,
    modified: &Ensemble,
) -> Result<KEvaluation> {
    let k = model.k;
    let tess = model.tessellation.as_ref().ok_or_else(|| Error::Missing(format!("tessellation for K = {k}")))?;
    let classifier = model.classifier.as_ref().ok_or_else(|| Error::Missing(format!("classifier for K = {k}")))?;
    let ops: Vec<ReducedOperators> = tess
        .centroids
        .iter()
        .map(|c| build_reduced(&config.fom, c, &artifacts.lifting))
        .collect::<Result<_>>()?;
    let tie_tag = format!("{}/{k}", seeds::CLASSIFIER_TIES);
    let outcomes: Vec<SampleOutcome> = (0..test.len())
        .into_par_iter()
        .map(|i| {
            let traj = &test.trajectories[i];
            let truth = true_label(&modified.trajectories[i], tess).map_err(|e| e.at_sample(i))?;
            let mut rng = seeds::stream(config.master_seed, &tie_tag, i as u64);
            let predicted = classifier.predict(&traj.input.strength, &mut rng).map_err(|e| e.at_sample(i))?;
            let on_true = rom_error(&ops[truth], traj, test);
            let on_pred = if predicted == truth { on_true.clone() } else { rom_error(&ops[predicted], traj, test) };
            Ok((truth, predicted, on_true, on_pred))
        })
        .collect::<Result<_>>()?;
    let true_labels: Vec<usize> = outcomes.iter().map(|o| o.0).collect();
    let predicted_labels: Vec<usize> = outcomes.iter().map(|o| o.1).collect();
    let on_true: Vec<_> = outcomes.iter().map(|o| o.2.clone()).collect();
    let on_pred: Vec<_> = outcomes.iter().map(|o| o.3.clone()).collect();
    let confusion = nbayes::confusion(&true_labels, &predicted_labels, k)?;
    let error_rate = nbayes::error_rate_estimate(&confusion, &classifier.priors).ok();
    let accuracy = confusion.accuracy();
    Ok(KEvaluation {
        k,
        true_labels,
        predicted_labels,
        true_errors: variant(&on_true),
        predicted_errors: variant(&on_pred),
        confusion,
        error_rate,
        accuracy,
    })
}

/// Predicted and true labels, reduced solves under both, error tables and
/// classifier diagnostics for every trained `K`.
pub fn evaluate(config: &PipelineConfig, artifacts: &TrainArtifacts, test: &Ensemble) -> Result<(Evaluation, Timings)> {
    config.validate()?;
    let start = Instant::now();
    let mut timings = Timings::default();
    let modified = modified_ensemble(test, &artifacts.lifting)?;
    let mut per_k = Vec::new();
    let mut skipped = Vec::new();
    for &k in &config.k_list {
        let model = artifacts.model(k).ok_or_else(|| Error::Missing(format!("trained model for K = {k}")))?;
        if let Some(reason) = &model.failure {
            skipped.push((k, reason.clone()));
            continue;
        }
        let t = Instant::now();
        per_k.push(evaluate_k(config, artifacts, model, test, &modified)?);
        timings.per_k.insert(k, t.elapsed().as_secs_f64());
    }
    timings.total = start.elapsed().as_secs_f64();
    Ok((Evaluation { per_k, skipped }, timings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    pub dims: Vec<usize>,
    /// `(dt/n) sum_i ||v_i - Pi_k v_i||^2` over the training set.
    pub training_energy: Option<f64>,
    pub energy_ratios: Vec<f64>,
    pub populations: Vec<usize>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub reseeds: usize,
    pub true_label: Option<ErrorRow>,
    pub predicted_label: Option<ErrorRow>,
    pub excluded_true: usize,
    pub excluded_predicted: usize,
    pub error_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub confusion: Option<Vec<Vec<usize>>>,
    /// Training samples per (height, label) for the hat generator.
    pub height_crosstab: Option<Vec<Vec<usize>>>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub master_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub per_k: Vec<KSummary>,
}

fn crosstab(config: &PipelineConfig, tess: &Tessellation) -> Option<Vec<Vec<usize>>> {
    let GeneratorConfig::Hat(h) = &config.generator else { return None };
    let mut table = vec![vec![0; tess.k()]; h.heights.len()];
    for (i, &l) in tess.labels.iter().enumerate() {
        table[i % h.heights.len()][l] += 1;
    }
    Some(table)
}

pub fn summarize(config: &PipelineConfig, artifacts: &TrainArtifacts, evaluation: &Evaluation, time_dt: f64) -> Summary {
    let per_k = config
        .k_list
        .iter()
        .map(|&k| {
            let model = artifacts.model(k);
            let tess = model.and_then(|m| m.tessellation.as_ref());
            let eval = evaluation.per_k.iter().find(|e| e.k == k);
            let row = |v: &VariantErrors| v.stats.as_ref().map(|s| ErrorRow::from((k, s)));
            KSummary {
                k,
                dims: model.map(|m| m.dims.clone()).unwrap_or_default(),
                training_energy: tess.map(|t| time_dt * t.energy / config.n_train as f64),
                energy_ratios: tess.map(|t| t.energy_ratios.clone()).unwrap_or_default(),
                populations: tess.map(|t| t.populations.clone()).unwrap_or_default(),
                iterations: tess.map(|t| t.iterations),
                converged: tess.map(|t| t.converged),
                reseeds: tess.map_or(0, |t| t.events.len()),
                true_label: eval.and_then(|e| row(&e.true_errors)),
                predicted_label: eval.and_then(|e| row(&e.predicted_errors)),
                excluded_true: eval.map_or(0, |e| e.true_errors.excluded.len()),
                excluded_predicted: eval.map_or(0, |e| e.predicted_errors.excluded.len()),
                error_rate: eval.and_then(|e| e.error_rate),
                accuracy: eval.map(|e| e.accuracy),
                confusion: eval.map(|e| e.confusion.counts.clone()),
                height_crosstab: tess.and_then(|t| crosstab(config, t)),
                failure: model.map_or_else(|| Some("not trained".into()), |m| m.failure.clone()),
            }
        })
        .collect();
    Summary {
        master_seed: config.master_seed,
        n_train: config.n_train,
        n_test: config.n_test,
        dim: artifacts.dim,
        per_k,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.12e}"))
}

impl Summary {
    /// One row per `(K, labelling)`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "K,labels,E,E_rel,V,V_rel,excluded,error_rate,accuracy,populations")?;
        for s in &self.per_k {
            let pops = s.populations.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
            for (name, row, excl) in
                [("true", &s.true_label, s.excluded_true), ("predicted", &s.predicted_label, s.excluded_predicted)]
            {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    s.k,
                    name,
                    opt(row.as_ref().map(|r| r.mean)),
                    opt(row.as_ref().map(|r| r.mean_rel)),
                    opt(row.as_ref().map(|r| r.variance)),
                    opt(row.as_ref().map(|r| r.variance_rel)),
                    excl,
                    opt(s.error_rate),
                    opt(s.accuracy),
                    pops
                )?;
            }
        }
        Ok(())
    }
}

/// Everything in memory: generate, train, evaluate, summarize.
pub fn run_all(config: &PipelineConfig) -> Result<(TrainArtifacts, Evaluation, Summary)> {
    let train_set = generate_ensemble(config, Split::Train)?;
    let test_set = generate_ensemble(config, Split::Test)?;
    let (artifacts, _) = train(config, &train_set)?;
    let (evaluation, _) = evaluate(config, &artifacts, &test_set)?;
    let summary = summarize(config, &artifacts, &evaluation, train_set.time.dt());
    Ok((artifacts, evaluation, summary))
}

/// Modified training states, exposed for diagnostics.
pub fn modified_training_set(train: &Ensemble, artifacts: &TrainArtifacts) -> Result<Ensemble> {
    let trajectories = train
        .trajectories
        .iter()
        .map(|t| modified_state(t, &artifacts.lifting))
        .collect::<Result<_>>()?;
    Ensemble::new(train.grid.clone(), train.time, trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> PipelineConfig {
        PipelineConfig {
            fom: FomConfig { nodes: 33, steps: 40, horizon: 0.4, ..FomConfig::default() },
            n_train: 8,
            n_test: 4,
            k_list: vec![1, 2],
            restarts: 2,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        assert!(PipelineConfig { n_train: 5, ..PipelineConfig::default() }.validate().is_err());
        assert!(PipelineConfig { k_list: vec![0], ..PipelineConfig::default() }.validate().is_err());
        assert!(PipelineConfig { energy_ratio: 1.5, ..PipelineConfig::default() }.validate().is_err());
        let mut bad_dims = PipelineConfig::default();
        bad_dims.cluster_dims.insert(2, vec![3]);
        assert!(bad_dims.validate().is_err());
    }

    #[test]
    fn inputs_do_not_depend_on_restarts() {
        let a = PipelineConfig { restarts: 1, ..desk() };
        let b = PipelineConfig { restarts: 7, ..desk() };
        assert_eq!(sample_input(&a, Split::Train, 3).unwrap(), sample_input(&b, Split::Train, 3).unwrap());
        assert_ne!(sample_input(&a, Split::Train, 3).unwrap(), sample_input(&a, Split::Test, 3).unwrap());
    }

    #[test]
    fn hat_heights_cycle() {
        let cfg = PipelineConfig { generator: GeneratorConfig::Hat(HatParams::default()), ..desk() };
        for i in 0..7 {
            let input = sample_input(&cfg, Split::Train, i).unwrap();
            assert_eq!(input.meta.param, [0.8, 0.9, 1.0, 1.1, 1.2][i % 5]);
        }
    }

    #[test]
    fn small_run_is_consistent() {
        let cfg = desk();
        let (artifacts, evaluation, summary) = run_all(&cfg).unwrap();
        assert_eq!(summary.per_k.len(), 2);
        for s in &summary.per_k {
            assert_eq!(s.populations.iter().sum::<usize>(), cfg.n_train);
        }
        let k1 = &evaluation.per_k[0];
        assert!(k1.predicted_labels.iter().all(|&l| l == 0));
        assert_eq!(k1.true_errors, k1.predicted_errors);
        let (again, _, summary2) = run_all(&cfg).unwrap();
        assert_eq!(artifacts, again);
        assert_eq!(summary, summary2);
    }
}
