//! Galerkin reduced-order model around the affine ansatz
//! `u = u_bar + A(t) w + sum_l alpha_l phi_l`.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::{snapshot_sq_sum, Ensemble, RandomInput, Snapshot, SpatialGrid, Trajectory};
use crate::error::{Error, Result};
use crate::fom::{BurgersOperator, FomConfig, LiftingData};
use crate::linalg::pairwise_sum;
use crate::pod::PodBasis;
use crate::tgcvt::{modified_distance_sq, tgcvt_energy, tgcvt_energy_from_spectra, Tessellation, TIE_TOLERANCE};

/// Largest inlet value a mode may carry and still be admissible.
pub const INLET_TOLERANCE: f64 = 1e-9;

/// Reduced arrays over the family `b = {u_bar, w, phi_1, ..., phi_d}`.
#[derive(Debug, Clone)]
pub struct ReducedOperators {
    config: FomConfig,
    basis: PodBasis,
    lifting: LiftingData,
    /// `stiff[l][a] = phi_l^T K b_a`
    stiff: Vec<Vec<f64>>,
    /// `conv[l][a][b] = phi_l^T N(b_a, b_b)`
    conv: Vec<Vec<Vec<f64>>>,
    /// `phi_l^T W w`
    mass_w: Vec<f64>,
    /// `phi_l^T W phi_m`
    mass: Vec<Vec<f64>>,
}

pub fn build_reduced(config: &FomConfig, basis: &PodBasis, lifting: &LiftingData) -> Result<ReducedOperators> {
    let op = BurgersOperator::from_config(config)?;
    let grid = op.grid();
    if basis.grid().len() != grid.len() {
        return Err(Error::Dimension { expected: grid.len(), found: basis.grid().len() });
    }
    for v in [&lifting.w, &lifting.u_bar] {
        if v.len() != grid.len() {
            return Err(Error::Dimension { expected: grid.len(), found: v.len() });
        }
    }
    for (mode, phi) in basis.modes().iter().enumerate() {
        if phi[0].abs() > INLET_TOLERANCE {
            return Err(Error::Inadmissible { mode, value: phi[0] });
        }
    }
    let family: Vec<&[f64]> = [&lifting.u_bar[..], &lifting.w[..]]
        .into_iter()
        .chain(basis.modes().iter().map(|m| &m[..]))
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let k = op.stiffness();
    let k_family: Vec<Vec<f64>> = family.iter().map(|b| k.mul_vec(b)).collect();
    let n_family: Vec<Vec<Vec<f64>>> =
        family.iter().map(|a| family.iter().map(|b| op.convection(a, b)).collect()).collect();
    let stiff = basis.modes().iter().map(|phi| k_family.iter().map(|kb| dot(phi, kb)).collect()).collect();
    let conv = basis
        .modes()
        .iter()
        .map(|phi| n_family.iter().map(|row| row.iter().map(|nab| dot(phi, nab)).collect()).collect())
        .collect();
    let mass_w = basis.modes().iter().map(|phi| grid.dot(phi, &lifting.w)).collect();
    let mass = basis.modes().iter().map(|p| basis.modes().iter().map(|q| grid.dot(p, q)).collect()).collect();
    Ok(ReducedOperators {
        config: config.clone(),
        basis: basis.clone(),
        lifting: lifting.clone(),
        stiff,
        conv,
        mass_w,
        mass,
    })
}

impl ReducedOperators {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn lifting(&self) -> &LiftingData {
        &self.lifting
    }

    pub fn config(&self) -> &FomConfig {
        &self.config
    }

    /// `phi_l^T W phi_m`; the identity for an orthonormal basis.
    pub fn mass(&self) -> &[Vec<f64>] {
        &self.mass
    }

    /// `nu phi_l^T K phi_m`.
    pub fn diffusion(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |l, m| self.config.nu() * self.stiff[l][2 + m])
    }

    /// Initial coordinates `Phi^T W (u_0 - u_bar - A(0) w)` of the
    /// full-order initial state.
    pub fn initial_alpha(&self, input: &RandomInput) -> Vec<f64> {
        let a0 = input.strength[0];
        let mut u0 = vec![0.0; self.lifting.w.len()];
        u0[0] = a0 * self.config.inlet_scale;
        let off = self.lifting.offset(a0);
        let v0: Vec<f64> = u0.iter().zip(off).map(|(u, o)| u - o).collect();
        self.basis.coefficients_unchecked(&v0)
    }

    /// One reduced theta-step from `alpha` at strengths `a_i`, `a_theta`.
    pub fn step(&self, alpha: &[f64], a_i: f64, a_theta: f64, step: usize) -> Result<Vec<f64>> {
        let d = self.dim();
        if d == 0 {
            return Ok(Vec::new());
        }
        let theta = self.config.theta;
        let c = 1.0 / (theta * self.config.dt());
        let nu = self.config.nu();
        let mut ci = Vec::with_capacity(d + 2);
        ci.push(1.0);
        ci.push(a_i);
        ci.extend_from_slice(alpha);
        let nb = d + 2;
        let mut matrix = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        for l in 0..d {
            let t = &self.conv[l];
            // g[a]: coefficient of c_theta[a] in N(u_theta, u^i) + N(u^i, u_theta)
            let g: Vec<f64> = (0..nb)
                .map(|a| (0..nb).map(|b| (t[a][b] + t[b][a]) * ci[b]).sum())
                .collect();
            let explicit: f64 = (0..nb).map(|a| ci[a] * (0..nb).map(|b| t[a][b] * ci[b]).sum::<f64>()).sum();
            for m in 0..d {
                matrix[(l, m)] = c * self.mass[l][m] + nu * self.stiff[l][2 + m] + g[2 + m];
            }
            let mass_alpha: f64 = (0..d).map(|m| self.mass[l][m] * alpha[m]).sum();
            rhs[l] = c * (mass_alpha - (a_theta - a_i) * self.mass_w[l])
                - nu * (self.stiff[l][0] + a_theta * self.stiff[l][1])
                - (g[0] + a_theta * g[1])
                + explicit;
        }
        let alpha_theta = matrix.lu().solve(&rhs).ok_or(Error::Singular { step })?;
        let next: Vec<f64> =
            alpha_theta.iter().zip(alpha).map(|(at, ai)| (at - (1.0 - theta) * ai) / theta).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomResult {
    /// `alpha[i]` holds the coordinates at `t_i`, `i = 0..=m`.
    pub alpha: Vec<Vec<f64>>,
    pub input: RandomInput,
    pub label: Option<usize>,
    pub wall_time: f64,
}

pub fn solve_rom(ops: &ReducedOperators, input: &RandomInput) -> Result<RomResult> {
    let m = ops.config.steps;
    if input.len() != m + 1 {
        return Err(Error::Dimension { expected: m + 1, found: input.len() });
    }
    let start = Instant::now();
    let theta = ops.config.theta;
    let a = &input.strength;
    let mut alpha = Vec::with_capacity(m + 1);
    alpha.push(ops.initial_alpha(input));
    for i in 0..m {
        let a_theta = theta * a[i + 1] + (1.0 - theta) * a[i];
        let next = ops.step(&alpha[i], a[i], a_theta, i + 1)?;
        alpha.push(next);
    }
    Ok(RomResult { alpha, input: input.clone(), label: None, wall_time: start.elapsed().as_secs_f64() })
}

impl RomResult {
    pub fn steps(&self) -> usize {
        self.alpha.len().saturating_sub(1)
    }

    /// `t,alpha_1,...,alpha_d` rows.
    pub fn write_csv<W: Write>(&self, dt: f64, out: &mut W) -> Result<()> {
        let d = self.alpha.first().map_or(0, Vec::len);
        write!(out, "t")?;
        for l in 1..=d {
            write!(out, ",alpha_{l}")?;
        }
        writeln!(out)?;
        for (i, row) in self.alpha.iter().enumerate() {
            write!(out, "{}", i as f64 * dt)?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `u_bar + A(t_j) w + sum_l alpha_l(t_j) phi_l` at full-order step `j`.
pub fn reconstruct(result: &RomResult, ops: &ReducedOperators, j: usize) -> Result<Snapshot> {
    let alpha = result.alpha.get(j).ok_or_else(|| Error::Invalid(format!("step {j} out of range")))?;
    let mut u = ops.lifting.offset(result.input.strength[j]);
    let v = ops.basis.combine(alpha);
    u.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += b);
    Ok(Snapshot(u))
}

/// Reconstructions at the snapshot instants of a trajectory with `snapshots`
/// entries.
pub fn reconstruct_trajectory(result: &RomResult, ops: &ReducedOperators, snapshots: usize) -> Result<Trajectory> {
    let stride = result.input.stride(snapshots)?;
    let snaps = (1..=snapshots).map(|j| reconstruct(result, ops, j * stride)).collect::<Result<_>>()?;
    Ok(Trajectory { input: result.input.clone(), snaps })
}

/// Centroid with the smallest modified distance to `modified`; ties go to
/// the lowest index.
pub fn true_label(modified: &Trajectory, tess: &Tessellation) -> Result<usize> {
    let dist: Vec<f64> = tess.centroids.iter().map(|c| modified_distance_sq(modified, c)).collect::<Result<_>>()?;
    let best = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = snapshot_sq_sum(modified, tess.centroids[0].grid()).max(best.abs());
    Ok(dist.iter().position(|&d| d <= best + TIE_TOLERANCE * scale).expect("nonempty tessellation"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub variance: f64,
    pub mean_rel: f64,
    pub variance_rel: f64,
    pub samples: Vec<f64>,
    pub samples_rel: Vec<f64>,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1.0))
}

/// Squared space-time distance `dt sum_j ||a(t_j) - b(t_j)||^2`.
pub fn space_time_error(a: &Trajectory, b: &Trajectory, dt: f64, grid: &SpatialGrid) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), found: b.len() });
    }
    let per: Vec<f64> = a
        .snaps
        .iter()
        .zip(&b.snaps)
        .map(|(x, y)| {
            let d: Vec<f64> = x.iter().zip(y.iter()).map(|(p, q)| p - q).collect();
            grid.inner_product(&d, &d)
        })
        .collect::<Result<_>>()?;
    Ok(dt * pairwise_sum(&per))
}

/// Absolute and relative squared space-time error of one reconstruction.
pub fn sample_error(fom: &Trajectory, rom: &Trajectory, grid: &SpatialGrid, dt: f64) -> Result<(f64, f64)> {
    let e = space_time_error(fom, rom, dt, grid)?;
    let norm = dt * snapshot_sq_sum(fom, grid);
    if !(norm > 0.0) {
        return Err(Error::Invalid("zero-norm trajectory in relative error".into()));
    }
    Ok((e, e / norm))
}

/// Monte Carlo error statistics over `(full-order, reconstructed)` pairs on
/// the grids of `reference`.
pub fn error_stats(pairs: &[(Trajectory, Trajectory)], reference: &Ensemble) -> Result<ErrorStats> {
    if pairs.is_empty() {
        return Err(Error::Empty("error sample"));
    }
    let (samples, samples_rel): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .enumerate()
        .map(|(i, (fom, rom))| sample_error(fom, rom, &reference.grid, reference.time.dt()).map_err(|e| e.at_sample(i)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(stats_from_samples(samples, samples_rel))
}

pub fn stats_from_samples(samples: Vec<f64>, samples_rel: Vec<f64>) -> ErrorStats {
    let (mean, variance) = mean_var(&samples);
    let (mean_rel, variance_rel) = mean_var(&samples_rel);
    ErrorStats { mean, variance, mean_rel, variance_rel, samples, samples_rel }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Direct and spectral forms of the training projection error
/// `(dt/n) sum_i ||u_i - Pi_k u_i||^2`.
pub fn training_energy_identity(ensemble: &Ensemble, tess: &Tessellation) -> Result<EnergyIdentity> {
    let scale = ensemble.time.dt() / ensemble.len() as f64;
    let lhs = scale * tgcvt_energy(ensemble, tess)?;
    let rhs = scale * tgcvt_energy_from_spectra(tess);
    let denom = lhs.abs().max(rhs.abs());
    let gap = if denom > 0.0 { (lhs - rhs).abs() / denom } else { 0.0 };
    Ok(EnergyIdentity { lhs, rhs, gap })
}

/// Row of the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub k: usize,
    pub mean: f64,
    pub mean_rel: f64,
    pub variance: f64,
    pub variance_rel: f64,
}

impl From<(usize, &ErrorStats)> for ErrorRow {
    fn from((k, s): (usize, &ErrorStats)) -> Self {
        Self { k, mean: s.mean, mean_rel: s.mean_rel, variance: s.variance, variance_rel: s.variance_rel }
    }
}

/// `K,E,E_rel,V,V_rel`.
pub fn write_error_table_csv<W: Write>(rows: &[ErrorRow], out: &mut W) -> Result<()> {
    writeln!(out, "K,E,E_rel,V,V_rel")?;
    for r in rows {
        writeln!(out, "{},{:.12e},{:.12e},{:.12e},{:.12e}", r.k, r.mean, r.mean_rel, r.variance, r.variance_rel)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::TimeGrid;
    use crate::fom::{build_lifting, modified_state, solve_fom, ensemble_mean, sample_trig, TrigParams};
    use crate::pod::pod_basis;
    use crate::tgcvt::{lloyd_tgcvt, LloydOptions};
    use proptest::prelude::*;

    fn small() -> FomConfig {
        FomConfig { nodes: 65, steps: 40, horizon: 0.4, ..FomConfig::default() }
    }

    fn setup(cfg: &FomConfig, seeds: &[u64]) -> (Ensemble, LiftingData) {
        let trajs = seeds
            .iter()
            .map(|&s| solve_fom(cfg, &sample_trig(cfg, &TrigParams::default(), s).unwrap()).unwrap())
            .collect();
        let e = Ensemble::new(cfg.grid().unwrap(), cfg.time_grid().unwrap(), trajs).unwrap();
        let w = build_lifting(cfg).unwrap();
        let u_bar = ensemble_mean(&e, &w).unwrap();
        (e, LiftingData { w, u_bar })
    }

    fn empty_basis(cfg: &FomConfig) -> PodBasis {
        PodBasis::from_parts(vec![], vec![], 0, cfg.grid().unwrap()).unwrap()
    }

    #[test]
    fn empty_basis_reconstructs_the_offset() {
        let cfg = small();
        let (e, lifting) = setup(&cfg, &[1]);
        let ops = build_reduced(&cfg, &empty_basis(&cfg), &lifting).unwrap();
        let r = solve_rom(&ops, &e.trajectories[0].input).unwrap();
        assert!(r.alpha.iter().all(Vec::is_empty));
        let a = e.trajectories[0].input.strength[7];
        assert_eq!(reconstruct(&r, &ops, 7).unwrap().0, lifting.offset(a));
    }

    #[test]
    fn single_mode_diffusion_is_the_rayleigh_quotient() {
        let cfg = small();
        let grid = cfg.grid().unwrap();
        let raw: Vec<f64> = grid.nodes().iter().map(|x| (1.5 * std::f64::consts::PI * x).sin()).collect();
        let norm = grid.inner_product(&raw, &raw).unwrap().sqrt();
        let phi: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let basis = PodBasis::from_parts(vec![Snapshot(phi.clone())], vec![1.0], 1, grid.clone()).unwrap();
        let lifting = LiftingData { w: Snapshot(vec![cfg.inlet_scale; 65]), u_bar: Snapshot::zeros(65) };
        let ops = build_reduced(&cfg, &basis, &lifting).unwrap();
        // Element-by-element integral of phi_x^2.
        let x = grid.nodes();
        let quad: f64 = (0..64).map(|k| (phi[k + 1] - phi[k]).powi(2) / (x[k + 1] - x[k])).sum();
        assert!((ops.diffusion()[(0, 0)] - quad / cfg.re).abs() < 1e-12);
        assert!((ops.mass()[0][0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inlet_carrying_mode_is_rejected() {
        let cfg = small();
        let grid = cfg.grid().unwrap();
        let basis = PodBasis::from_parts(vec![Snapshot(vec![1.0; 65])], vec![1.0], 1, grid).unwrap();
        let lifting = LiftingData { w: Snapshot(vec![0.01; 65]), u_bar: Snapshot::zeros(65) };
        assert!(matches!(build_reduced(&cfg, &basis, &lifting), Err(Error::Inadmissible { mode: 0, .. })));
    }

    #[test]
    fn zero_data_stays_at_rest() {
        let cfg = small();
        let grid = cfg.grid().unwrap();
        let raw: Vec<f64> = grid.nodes().iter().map(|x| x * (2.0 - x)).collect();
        let n = grid.inner_product(&raw, &raw).unwrap().sqrt();
        let basis = PodBasis::from_parts(vec![Snapshot(raw.iter().map(|v| v / n).collect())], vec![1.0], 1, grid).unwrap();
        let lifting = LiftingData { w: Snapshot(vec![0.01; 65]), u_bar: Snapshot::zeros(65) };
        let ops = build_reduced(&cfg, &basis, &lifting).unwrap();
        let r = solve_rom(&ops, &RandomInput::custom(vec![0.0; 41]).unwrap()).unwrap();
        assert!(r.alpha.iter().all(|a| a[0] == 0.0));
    }

    fn own_basis(cfg: &FomConfig, traj: &Trajectory, lifting: &LiftingData) -> PodBasis {
        let v = modified_state(traj, lifting).unwrap();
        let mut snaps = v.snaps.clone();
        let a0 = traj.input.strength[0];
        let mut u0 = vec![0.0; cfg.nodes];
        u0[0] = a0 * cfg.inlet_scale;
        snaps.push(Snapshot(u0.iter().zip(lifting.offset(a0)).map(|(u, o)| u - o).collect()));
        let grid = cfg.grid().unwrap();
        let probe = pod_basis(&snaps, &grid, 1).unwrap();
        pod_basis(&snaps, &grid, probe.numerical_rank()).unwrap()
    }

    #[test]
    fn in_subspace_trajectory_is_reproduced() {
        let cfg = FomConfig { nodes: 129, steps: 12, horizon: 0.06, ..FomConfig::default() };
        let (e, lifting) = setup(&cfg, &[3]);
        let traj = &e.trajectories[0];
        let basis = own_basis(&cfg, traj, &lifting);
        assert!(basis.dim() < cfg.nodes - 1);
        let ops = build_reduced(&cfg, &basis, &lifting).unwrap();
        let r = solve_rom(&ops, &traj.input).unwrap();
        let rec = reconstruct_trajectory(&r, &ops, traj.len()).unwrap();
        let err = space_time_error(traj, &rec, e.time.dt(), &e.grid).unwrap();
        assert!(err.sqrt() <= 1e-8, "space-time error {}", err.sqrt());
    }

    #[test]
    fn reconstruction_respects_the_inlet() {
        let cfg = small();
        let (e, lifting) = setup(&cfg, &[1, 2, 3]);
        let modified: Vec<Snapshot> =
            e.trajectories.iter().flat_map(|t| modified_state(t, &lifting).unwrap().snaps).collect();
        let basis = pod_basis(&modified, &e.grid, 4).unwrap();
        let ops = build_reduced(&cfg, &basis, &lifting).unwrap();
        let input = sample_trig(&cfg, &TrigParams::default(), 99).unwrap();
        let r = solve_rom(&ops, &input).unwrap();
        for j in 0..=cfg.steps {
            let u = reconstruct(&r, &ops, j).unwrap();
            assert!((u[0] - input.strength[j] * cfg.inlet_scale).abs() <= 1e-8);
        }
        let zero = RomResult { alpha: vec![vec![0.0; 4]; cfg.steps + 1], ..r.clone() };
        assert_eq!(reconstruct(&zero, &ops, 3).unwrap().0, lifting.offset(input.strength[3]));
        let mut unit = zero.clone();
        unit.alpha[3] = vec![1.0, 0.0, 0.0, 0.0];
        let expect: Vec<f64> = lifting.offset(input.strength[3]).iter().zip(basis.modes()[0].iter()).map(|(a, b)| a + b).collect();
        assert_eq!(reconstruct(&unit, &ops, 3).unwrap().0, expect);
        assert!(reconstruct(&r, &ops, cfg.steps + 1).is_err());
    }

    #[test]
    fn rom_error_dominates_projection_error() {
        let cfg = small();
        let (e, lifting) = setup(&cfg, &[4, 5, 6]);
        let modified: Vec<Trajectory> = e.trajectories.iter().map(|t| modified_state(t, &lifting).unwrap()).collect();
        let snaps: Vec<Snapshot> = modified.iter().flat_map(|t| t.snaps.clone()).collect();
        for d in [2, 5, 8] {
            let basis = pod_basis(&snaps, &e.grid, d).unwrap();
            let ops = build_reduced(&cfg, &basis, &lifting).unwrap();
            for (t, v) in e.trajectories.iter().zip(&modified) {
                let rec = reconstruct_trajectory(&solve_rom(&ops, &t.input).unwrap(), &ops, t.len()).unwrap();
                let rom = space_time_error(t, &rec, e.time.dt(), &e.grid).unwrap();
                let proj = e.time.dt() * modified_distance_sq(v, &basis).unwrap();
                assert!(rom >= proj - 1e-10, "d = {d}: rom {rom} < projection {proj}");
            }
        }
    }

    #[test]
    fn true_label_examples() {
        let cfg = small();
        let (e, lifting) = setup(&cfg, &[1, 2, 3, 4, 5, 6]);
        let modified = crate::fom::modified_ensemble(&e, &lifting).unwrap();
        let one = lloyd_tgcvt(&modified, 1, &[2], LloydOptions::default(), 1).unwrap();
        assert_eq!(true_label(&modified.trajectories[0], &one).unwrap(), 0);
        let three = lloyd_tgcvt(&modified, 3, &[1, 1, 1], LloydOptions::default(), 1).unwrap();
        for t in &modified.trajectories {
            let brute: Vec<f64> = three.centroids.iter().map(|c| modified_distance_sq(t, c).unwrap()).collect();
            let label = true_label(t, &three).unwrap();
            assert!(brute.iter().all(|&d| brute[label] <= d));
        }
        let inside = Trajectory { input: e.trajectories[0].input.clone(), snaps: vec![three.centroids[1].modes()[0].clone(); e.time.len()] };
        assert_eq!(true_label(&inside, &three).unwrap(), 1);
    }

    #[test]
    fn error_stats_examples() {
        let grid = SpatialGrid::uniform(3).unwrap();
        let time = TimeGrid::new(0.5, 1).unwrap();
        let input = RandomInput::custom(vec![0.0, 0.0]).unwrap();
        let fom = Trajectory { input: input.clone(), snaps: vec![Snapshot(vec![2.0; 3])] };
        let e = Ensemble::new(grid, time, vec![fom.clone()]).unwrap();
        // ||(1,1,1)||^2 = 1, times dt = 0.5
        let rom = Trajectory { input, snaps: vec![Snapshot(vec![1.0; 3])] };
        let s = error_stats(&[(fom.clone(), rom)], &e).unwrap();
        assert_eq!((s.mean, s.variance), (0.5, 0.0));
        assert_eq!(s.mean_rel, 0.25);
        let same = error_stats(&[(fom.clone(), fom.clone()), (fom.clone(), fom)], &e).unwrap();
        assert_eq!((same.mean, same.variance, same.mean_rel, same.variance_rel), (0.0, 0.0, 0.0, 0.0));
        assert!(error_stats(&[], &e).is_err());
    }

    #[test]
    fn energy_identity_on_desk_ensemble() {
        let cfg = small();
        let (e, lifting) = setup(&cfg, &[1, 2, 3, 4, 5, 6, 7, 8]);
        let modified = crate::fom::modified_ensemble(&e, &lifting).unwrap();
        for (k, dims) in [(1, vec![3]), (3, vec![3, 3, 3])] {
            let t = lloyd_tgcvt(&modified, k, &dims, LloydOptions::default(), 2).unwrap();
            let id = training_energy_identity(&modified, &t).unwrap();
            assert!(id.gap <= 1e-8, "K = {k}: {id:?}");
        }
    }

    #[test]
    fn error_table_csv_layout() {
        let s = stats_from_samples(vec![1.0, 3.0], vec![0.1, 0.3]);
        let mut out = Vec::new();
        write_error_table_csv(&[ErrorRow::from((2, &s))], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("K,E,E_rel,V,V_rel\n2,2.000000000000e0,"));
    }

    proptest! {
        #[test]
        fn error_mean_is_additive(xs in prop::collection::vec(0.0f64..10.0, 1..30), split in 0usize..30) {
            let split = split.min(xs.len());
            let all = stats_from_samples(xs.clone(), xs.clone());
            prop_assert!(all.mean >= 0.0 && all.variance >= 0.0);
            if split > 0 && split < xs.len() {
                let a = stats_from_samples(xs[..split].to_vec(), vec![0.0; split]);
                let b = stats_from_samples(xs[split..].to_vec(), vec![0.0; xs.len() - split]);
                let weighted = (a.mean * split as f64 + b.mean * (xs.len() - split) as f64) / xs.len() as f64;
                prop_assert!((weighted - all.mean).abs() <= 1e-12 * (1.0 + all.mean));
            }
        }
    }
}
