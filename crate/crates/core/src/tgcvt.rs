//! Modified time-dependent generalized CVT clustering.
//!
//! Trajectories are the "points", the squared snapshot-wise projection
//! residual onto a POD subspace is the distance, and the generalized
//! centroid of a cluster is the POD subspace of all snapshots of its
//! members. Lloyd iteration alternates nearest-subspace assignment with
//! per-cluster POD until the labels stop changing. A plain vector CVT
//! (k-means) with the same loop structure is provided as a baseline.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{snapshot_sq_sum, Ensemble, Trajectory};
use crate::error::{Error, Result};
use crate::pod::{PodBasis, SpatialCovariance};
use crate::seeds;

/// Relative tolerance under which two distances count as an exact tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `sum_j ||u(t_j) - Pi u(t_j)||^2`, evaluated from explicit residuals.
pub fn modified_distance_sq(traj: &Trajectory, basis: &PodBasis) -> Result<f64> {
    let m = basis.grid().len();
    if let Some(s) = traj.snaps.iter().find(|s| s.len() != m) {
        return Err(Error::Dimension { expected: m, found: s.len() });
    }
    Ok(traj.snaps.iter().map(|s| basis.residual_sq_unchecked(s)).sum())
}

fn tie_set(dist: &[f64], scale: f64) -> Vec<usize> {
    let best = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * scale.max(best.abs());
    (0..dist.len()).filter(|&k| dist[k] <= best + tol).collect()
}

/// Nearest-subspace labels; exact ties are broken uniformly at random.
pub fn assign<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    centroids: &[PodBasis],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(Error::Empty("centroid list"));
    }
    let mut labels = Vec::with_capacity(ensemble.len());
    for traj in &ensemble.trajectories {
        let dist = centroids
            .iter()
            .map(|c| modified_distance_sq(traj, c))
            .collect::<Result<Vec<_>>>()?;
        let ties = tie_set(&dist, snapshot_sq_sum(traj, &ensemble.grid));
        labels.push(*ties.choose(rng).expect("tie set is never empty"));
    }
    Ok(labels)
}

fn populations(labels: &[usize], k: usize) -> Vec<usize> {
    let mut pop = vec![0; k];
    for &l in labels {
        pop[l] += 1;
    }
    pop
}

fn check_labels(labels: &[usize], n: usize, k: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Dimension { expected: n, found: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label { label, classes: k });
    }
    Ok(())
}

/// Per-cluster POD over all `J n_k` snapshots of each cluster.
pub fn update_centroids(ensemble: &Ensemble, labels: &[usize], dims: &[usize]) -> Result<Vec<PodBasis>> {
    let k = dims.len();
    check_labels(labels, ensemble.len(), k)?;
    (0..k)
        .map(|c| {
            let snaps: Vec<&[f64]> = ensemble
                .trajectories
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .flat_map(|(t, _)| t.snaps.iter().map(|s| &s[..]))
                .collect();
            if snaps.is_empty() {
                return Err(Error::Infeasible(format!("cluster {c} is empty")));
            }
            crate::pod::pod_basis(&snaps, &ensemble.grid, dims[c]).map_err(|e| cluster_error(c, e))
        })
        .collect()
}

fn cluster_error(c: usize, e: Error) -> Error {
    match e {
        Error::Rank { requested, rank } => Error::Infeasible(format!(
            "cluster {c} supports at most {rank} modes, {requested} requested"
        )),
        other => other,
    }
}

/// Something noteworthy that happened while iterating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClusterEvent {
    /// An empty cluster was re-seeded with the trajectory farthest from its
    /// own centroid.
    Reseeded { iteration: usize, cluster: usize, trajectory: usize, distance: f64 },
}

/// Converged (or iteration-capped) modified t-gCVT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tessellation {
    /// Class index in `0..K` per trajectory.
    pub labels: Vec<usize>,
    pub centroids: Vec<PodBasis>,
    /// `sum_k sum_{u in k} D~^2(u, Pi_k u)`.
    pub energy: f64,
    pub populations: Vec<usize>,
    pub energy_ratios: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Energy after initialization and after every assign/update pair.
    pub history: Vec<f64>,
    pub events: Vec<ClusterEvent>,
}

impl Tessellation {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.centroids.iter().map(PodBasis::dim).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LloydOptions {
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self { max_iter: 50, restarts: 1 }
    }
}

/// Cached per-trajectory spatial covariances; distances to any subspace are
/// then `sum_j <u_j,u_j> - sum_l <phi_l, C phi_l>` at `O(M^2 d)` cost.
pub(crate) struct TrajectoryCache {
    cov: Vec<SpatialCovariance>,
    energy: Vec<f64>,
}

impl TrajectoryCache {
    pub(crate) fn new(ensemble: &Ensemble) -> Self {
        let grid = &ensemble.grid;
        let (cov, energy) = ensemble
            .trajectories
            .par_iter()
            .map(|t| {
                let mut c = SpatialCovariance::new(grid.len());
                c.add_snapshots(grid, &t.snaps);
                (c, snapshot_sq_sum(t, grid))
            })
            .unzip();
        Self { cov, energy }
    }

    fn distance(&self, i: usize, basis: &PodBasis) -> f64 {
        (self.energy[i] - self.cov[i].captured(basis)).max(0.0)
    }

    fn centroid(&self, ensemble: &Ensemble, labels: &[usize], cluster: usize, dim: usize) -> Result<PodBasis> {
        let mut acc = SpatialCovariance::new(ensemble.grid.len());
        for (i, _) in labels.iter().enumerate().filter(|(_, &l)| l == cluster) {
            acc.add(&self.cov[i]);
        }
        if acc.count() == 0 {
            return Err(Error::Infeasible(format!("cluster {cluster} is empty")));
        }
        acc.pod_basis(&ensemble.grid, dim).map_err(|e| cluster_error(cluster, e))
    }

    fn centroids(&self, ensemble: &Ensemble, labels: &[usize], dims: &[usize]) -> Result<Vec<PodBasis>> {
        (0..dims.len())
            .into_par_iter()
            .map(|c| self.centroid(ensemble, labels, c, dims[c]))
            .collect()
    }

    fn distances(&self, centroids: &[PodBasis]) -> Vec<Vec<f64>> {
        (0..self.cov.len())
            .into_par_iter()
            .map(|i| centroids.iter().map(|c| self.distance(i, c)).collect())
            .collect()
    }
}

/// Moves the trajectory farthest from its own centroid into each empty
/// cluster. `own` holds that distance per trajectory.
fn reseed_empty(
    labels: &mut [usize],
    own: &[f64],
    k: usize,
    iteration: usize,
    events: &mut Vec<ClusterEvent>,
) -> Result<()> {
    let mut pop = populations(labels, k);
    let mut taken = vec![false; labels.len()];
    for cluster in 0..k {
        if pop[cluster] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| !taken[i] && pop[labels[i]] > 1)
            .max_by(|&a, &b| own[a].total_cmp(&own[b]).then(b.cmp(&a)))
            .ok_or_else(|| Error::Infeasible("no trajectory available to re-seed".into()))?;
        pop[labels[donor]] -= 1;
        pop[cluster] += 1;
        labels[donor] = cluster;
        taken[donor] = true;
        events.push(ClusterEvent::Reseeded { iteration, cluster, trajectory: donor, distance: own[donor] });
    }
    Ok(())
}

fn validate(ensemble: &Ensemble, k: usize, dims: &[usize], max_iter: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Invalid("K must be at least 1".into()));
    }
    if k > ensemble.len() {
        return Err(Error::Infeasible(format!("K = {k} exceeds {} trajectories", ensemble.len())));
    }
    if dims.len() != k {
        return Err(Error::Dimension { expected: k, found: dims.len() });
    }
    if max_iter == 0 {
        return Err(Error::Invalid("max_iter must be at least 1".into()));
    }
    Ok(())
}

/// Random equal-size partition of `n` trajectories into `k` clusters.
fn initial_labels<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % k;
    }
    labels
}

fn run<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    cache: &TrajectoryCache,
    mut labels: Vec<usize>,
    dims: &[usize],
    max_iter: usize,
    ties: &mut R,
) -> Result<Tessellation> {
    let k = dims.len();
    let mut events = Vec::new();

    if populations(&labels, k).contains(&0) {
        // Distances to the centroids of the clusters that do have members.
        let mut own = vec![0.0; labels.len()];
        for c in 0..k {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let basis = cache.centroid(ensemble, &labels, c, dims[c])?;
            for i in members {
                own[i] = cache.distance(i, &basis);
            }
        }
        reseed_empty(&mut labels, &own, k, 0, &mut events)?;
    }

    let mut centroids = cache.centroids(ensemble, &labels, dims)?;
    let total = |labels: &[usize], centroids: &[PodBasis]| -> f64 {
        labels.iter().enumerate().map(|(i, &l)| cache.distance(i, &centroids[l])).sum()
    };
    let mut history = vec![total(&labels, &centroids)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let dist = cache.distances(&centroids);
        let mut next: Vec<usize> = dist
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let set = tie_set(d, cache.energy[i]);
                if set.contains(&labels[i]) {
                    labels[i]
                } else {
                    *set.choose(ties).expect("tie set is never empty")
                }
            })
            .collect();
        if populations(&next, k).contains(&0) {
            let own: Vec<f64> = next.iter().enumerate().map(|(i, &l)| dist[i][l]).collect();
            reseed_empty(&mut next, &own, k, iterations, &mut events)?;
        }
        centroids = cache.centroids(ensemble, &next, dims)?;
        history.push(total(&next, &centroids));
        let unchanged = next == labels;
        labels = next;
        if unchanged {
            converged = true;
            break;
        }
    }

    let energy = *history.last().expect("history is never empty");
    let energy_ratios = centroids.iter().map(PodBasis::energy_ratio).collect::<Result<Vec<_>>>()?;
    Ok(Tessellation {
        populations: populations(&labels, k),
        labels,
        centroids,
        energy,
        energy_ratios,
        iterations,
        converged,
        history,
        events,
    })
}

/// Lloyd iteration with seeded restarts; the lowest-energy tessellation wins.
pub fn lloyd_tgcvt(
    ensemble: &Ensemble,
    k: usize,
    dims: &[usize],
    options: LloydOptions,
    seed: u64,
) -> Result<Tessellation> {
    validate(ensemble, k, dims, options.max_iter)?;
    let cache = TrajectoryCache::new(ensemble);
    let mut best: Option<Tessellation> = None;
    let mut last_err = None;
    for restart in 0..options.restarts.max(1) as u64 {
        let mut init = seeds::stream(seed, seeds::CLUSTER_INIT, restart);
        let mut ties = seeds::stream(seed, seeds::CLUSTER_TIES, restart);
        let labels = initial_labels(ensemble.len(), k, &mut init);
        match run(ensemble, &cache, labels, dims, options.max_iter, &mut ties) {
            Ok(t) => {
                if best.as_ref().map_or(true, |b| t.energy < b.energy) {
                    best = Some(t);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart ran"))
}

/// Lloyd iteration from caller-supplied initial labels. Empty initial
/// clusters are re-seeded before the first centroid update.
pub fn lloyd_from_labels<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    labels: Vec<usize>,
    dims: &[usize],
    max_iter: usize,
    ties: &mut R,
) -> Result<Tessellation> {
    validate(ensemble, dims.len(), dims, max_iter)?;
    check_labels(&labels, ensemble.len(), dims.len())?;
    let cache = TrajectoryCache::new(ensemble);
    run(ensemble, &cache, labels, dims, max_iter, ties)
}

/// Direct-sum modified t-gCVT energy of a tessellation.
pub fn tgcvt_energy(ensemble: &Ensemble, tess: &Tessellation) -> Result<f64> {
    check_labels(&tess.labels, ensemble.len(), tess.k())?;
    let per: Vec<f64> = ensemble
        .trajectories
        .par_iter()
        .zip(&tess.labels)
        .map(|(t, &l)| modified_distance_sq(t, &tess.centroids[l]))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum())
}

/// The minimum-value form `sum_k J n_k sum_{j>d_k} sigma_j^k`.
pub fn tgcvt_energy_from_spectra(tess: &Tessellation) -> f64 {
    tess.centroids.iter().map(|c| c.snapshot_count() as f64 * c.tail()).sum()
}

/// `nu_k = sum_{j<=d_k} sigma_j^k / sum_j sigma_j^k` per cluster.
pub fn energy_ratios(tess: &Tessellation) -> Result<Vec<f64>> {
    tess.centroids.iter().map(PodBasis::energy_ratio).collect()
}

/// `trajectory,label,distance` with 1-based labels.
pub fn write_assignments_csv<W: Write>(out: &mut W, ensemble: &Ensemble, tess: &Tessellation) -> Result<()> {
    writeln!(out, "trajectory,label,distance")?;
    for (i, (t, &l)) in ensemble.trajectories.iter().zip(&tess.labels).enumerate() {
        let d = modified_distance_sq(t, &tess.centroids[l])?;
        writeln!(out, "{i},{},{d}", l + 1)?;
    }
    Ok(())
}

/// `cluster,index,eigenvalue` with 1-based cluster and index.
pub fn write_cluster_spectra_csv<W: Write>(out: &mut W, tess: &Tessellation) -> Result<()> {
    writeln!(out, "cluster,index,eigenvalue")?;
    for (c, basis) in tess.centroids.iter().enumerate() {
        for (j, s) in basis.eigvals().iter().enumerate() {
            writeln!(out, "{},{},{s}", c + 1, j + 1)?;
        }
    }
    Ok(())
}

/// Result of the classic vector CVT.
#[derive(Debug, Clone, PartialEq)]
pub struct Cvt {
    pub labels: Vec<usize>,
    pub generators: Vec<Vec<f64>>,
    pub energy: f64,
    pub history: Vec<f64>,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean CVT by Lloyd iteration (k-means with mean generators).
pub fn classic_cvt(points: &[Vec<f64>], k: usize, options: LloydOptions, seed: u64) -> Result<Cvt> {
    if k == 0 {
        return Err(Error::Invalid("K must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::Infeasible(format!("K = {k} exceeds {} points", points.len())));
    }
    if options.max_iter == 0 {
        return Err(Error::Invalid("max_iter must be at least 1".into()));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension { expected: dim, found: p.len() });
    }
    let mut best: Option<Cvt> = None;
    for restart in 0..options.restarts.max(1) as u64 {
        let mut rng = seeds::stream(seed, seeds::CLUSTER_INIT, restart);
        let picks = rand::seq::index::sample(&mut rng, points.len(), k);
        let generators: Vec<Vec<f64>> = picks.iter().map(|i| points[i].clone()).collect();
        let run = cvt_run(points, generators, options.max_iter, &mut rng);
        if best.as_ref().map_or(true, |b| run.energy < b.energy) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart ran"))
}

fn cvt_run<R: Rng + ?Sized>(points: &[Vec<f64>], mut generators: Vec<Vec<f64>>, max_iter: usize, rng: &mut R) -> Cvt {
    let k = generators.len();
    let n = points.len();
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let mut own = vec![0.0; n];
        let next: Vec<usize> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d: Vec<f64> = generators.iter().map(|g| sq_dist(p, g)).collect();
                let set = tie_set(&d, 0.0);
                let l = if set.contains(&labels[i]) { labels[i] } else { *set.choose(rng).unwrap() };
                own[i] = d[l];
                l
            })
            .collect();
        let mut next = next;
        let mut events = Vec::new();
        // Cannot fail: k <= n guarantees a donor with population > 1.
        let _ = reseed_empty(&mut next, &own, k, 0, &mut events);
        let pop = populations(&next, k);
        let mut sums = vec![vec![0.0; points[0].len()]; k];
        for (p, &l) in points.iter().zip(&next) {
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (g, (s, &c)) in generators.iter_mut().zip(sums.iter().zip(&pop)) {
            *g = s.iter().map(|x| x / c as f64).collect();
        }
        history.push(points.iter().zip(&next).map(|(p, &l)| sq_dist(p, &generators[l])).sum());
        let unchanged = next == labels;
        labels = next;
        if unchanged {
            converged = true;
            break;
        }
    }
    let energy = *history.last().unwrap();
    Cvt { labels, generators, energy, history, converged }
}
