//! 1D viscous Burgers full-order model with a stochastic inflow strength.
//!
//! `u_t - (1/Re) u_xx + u u_x = 0` on `(0, 1)`, `u(t, 0) = A(t) s`, zero
//! flux at `x = 1`. Piecewise-linear finite elements with a lumped mass
//! matrix; time stepping by a Newton-linearized theta-scheme.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    Ensemble, GeneratorKind, InputMeta, RandomInput, Snapshot, SpatialGrid, TimeGrid, Trajectory,
};
use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FomConfig {
    pub re: f64,
    pub nodes: usize,
    pub horizon: f64,
    pub steps: usize,
    pub inlet_scale: f64,
    pub theta: f64,
    pub a1: f64,
    pub a2: f64,
    /// Full-order steps between recorded snapshots.
    pub snapshot_stride: usize,
}

impl Default for FomConfig {
    fn default() -> Self {
        Self {
            re: 500.0,
            nodes: 129,
            horizon: 2.0,
            steps: 400,
            inlet_scale: 0.01,
            theta: 0.5,
            a1: 2.0,
            a2: 1.0,
            snapshot_stride: 1,
        }
    }
}

impl FomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invalid(msg.into()));
        if !(self.re > 0.0 && self.re.is_finite()) {
            return bad("re must be positive");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad("theta must lie in (0, 1]");
        }
        if self.a1 == self.a2 || !self.a1.is_finite() || !self.a2.is_finite() {
            return bad("a1 and a2 must be distinct finite strengths");
        }
        if self.nodes < 3 {
            return bad("nodes must be at least 3");
        }
        if self.steps == 0 || !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("steps and horizon must be positive");
        }
        if self.snapshot_stride == 0 || self.steps % self.snapshot_stride != 0 {
            return bad("snapshot_stride must divide steps");
        }
        if !self.inlet_scale.is_finite() {
            return bad("inlet_scale must be finite");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn nu(&self) -> f64 {
        1.0 / self.re
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::uniform(self.nodes)
    }

    /// Snapshot instants `t_1, ..., t_J`.
    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.dt() * self.snapshot_stride as f64, self.steps / self.snapshot_stride)
    }

    /// Full-order instants `t_0, ..., t_m`.
    pub fn instants(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.steps).map(|j| j as f64 * dt).collect()
    }
}

/// Truncated trigonometric series around a mean strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrigParams {
    pub mean: f64,
    pub sigma: f64,
    pub terms: usize,
}

impl Default for TrigParams {
    fn default() -> Self {
        Self { mean: 70.0, sigma: 12.0, terms: 100 }
    }
}

/// `A(t) = A0 + sigma sum_i (1/i) [sin(pi i t) eta1_i + cos(pi i t) eta2_i]`
/// with `eta = [eta1; eta2]`.
pub fn trig_strength(config: &FomConfig, params: &TrigParams, eta: &[f64]) -> Result<RandomInput> {
    let n = params.terms;
    if n == 0 || !(params.sigma >= 0.0) {
        return Err(Error::Invalid("trig generator needs terms >= 1 and sigma >= 0".into()));
    }
    if eta.len() != 2 * n {
        return Err(Error::Dimension { expected: 2 * n, found: eta.len() });
    }
    let (eta1, eta2) = eta.split_at(n);
    let strength = config
        .instants()
        .into_iter()
        .map(|t| {
            let series: f64 = (1..=n)
                .map(|i| {
                    let w = std::f64::consts::PI * i as f64 * t;
                    (w.sin() * eta1[i - 1] + w.cos() * eta2[i - 1]) / i as f64
                })
                .sum();
            params.mean + params.sigma * series
        })
        .collect();
    RandomInput::new(strength, InputMeta { generator: GeneratorKind::Trig, seed: 0, param: params.mean })
}

/// Deterministic part of the hat strength: `60(1 + a t)` up to `t = 1`,
/// then `60(1 + a(2 - t))`.
pub fn hat_profile(a: f64, t: f64) -> f64 {
    if t <= 1.0 {
        60.0 * (1.0 + a * t)
    } else {
        60.0 * (1.0 + a * (2.0 - t))
    }
}

/// Hat profile plus piecewise-constant white noise `sigma eta_i / sqrt(dt)`;
/// `eta` has one draw per step interval.
pub fn hat_strength(config: &FomConfig, a: f64, sigma: f64, eta: &[f64]) -> Result<RandomInput> {
    if !(a > 0.0) || !(sigma >= 0.0) {
        return Err(Error::Invalid("hat generator needs a > 0 and sigma >= 0".into()));
    }
    let m = config.steps;
    if eta.len() != m {
        return Err(Error::Dimension { expected: m, found: eta.len() });
    }
    let scale = sigma / config.dt().sqrt();
    let strength = config
        .instants()
        .into_iter()
        .enumerate()
        .map(|(j, t)| hat_profile(a, t) + scale * eta[j.min(m - 1)])
        .collect();
    RandomInput::new(strength, InputMeta { generator: GeneratorKind::Hat, seed: 0, param: a })
}

fn normals(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = seeds::from_seed(seed);
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Trig input whose latent draws come from `seed`.
pub fn sample_trig(config: &FomConfig, params: &TrigParams, seed: u64) -> Result<RandomInput> {
    let mut input = trig_strength(config, params, &normals(seed, 2 * params.terms))?;
    input.meta.seed = seed;
    Ok(input)
}

/// Hat input of height `a` whose latent draws come from `seed`.
pub fn sample_hat(config: &FomConfig, a: f64, sigma: f64, seed: u64) -> Result<RandomInput> {
    let mut input = hat_strength(config, a, sigma, &normals(seed, config.steps))?;
    input.meta.seed = seed;
    Ok(input)
}

/// `t,A` rows on the full-order grid.
pub fn write_strength_csv<W: Write>(input: &RandomInput, dt: f64, out: &mut W) -> Result<()> {
    writeln!(out, "t,A")?;
    for (j, a) in input.strength.iter().enumerate() {
        writeln!(out, "{},{}", j as f64 * dt, a)?;
    }
    Ok(())
}

/// Assembled spatial operators on a (possibly non-uniform) P1 mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersOperator {
    grid: SpatialGrid,
    nu: f64,
}

impl BurgersOperator {
    pub fn new(grid: SpatialGrid, nu: f64) -> Self {
        Self { grid, nu }
    }

    pub fn from_config(config: &FomConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::new(config.grid()?, config.nu()))
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn spacing(&self, k: usize) -> f64 {
        let x = self.grid.nodes();
        x[k + 1] - x[k]
    }

    /// Stiffness matrix of `int u_x v_x` with natural conditions at both ends.
    pub fn stiffness(&self) -> Tridiagonal {
        let n = self.len();
        let mut k = Tridiagonal::zeros(n);
        for e in 0..n - 1 {
            let c = 1.0 / self.spacing(e);
            k.diag[e] += c;
            k.diag[e + 1] += c;
            k.upper[e] -= c;
            k.lower[e + 1] -= c;
        }
        k
    }

    /// Convection vector `N(a, b)_i = int a b_x phi_i`, exact for P1 data.
    pub fn convection(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for k in 0..n - 1 {
            let db = (b[k + 1] - b[k]) / 6.0;
            out[k] += db * (2.0 * a[k] + a[k + 1]);
            out[k + 1] += db * (a[k] + 2.0 * a[k + 1]);
        }
        out
    }

    /// Tridiagonal matrix of `x -> N(x, b) + N(a, x)`.
    fn convection_jacobian(&self, a: &[f64], b: &[f64]) -> Tridiagonal {
        let n = self.len();
        let mut j = Tridiagonal::zeros(n);
        for k in 0..n - 1 {
            let db = (b[k + 1] - b[k]) / 6.0;
            j.diag[k] += 2.0 * db;
            j.upper[k] += db;
            j.lower[k + 1] += db;
            j.diag[k + 1] += 2.0 * db;
            let sk = (2.0 * a[k] + a[k + 1]) / 6.0;
            let tk = (a[k] + 2.0 * a[k + 1]) / 6.0;
            j.diag[k] -= sk;
            j.upper[k] += sk;
            j.lower[k + 1] -= tk;
            j.diag[k + 1] += tk;
        }
        j
    }

    /// Steady residual `nu K u + N(u, u)` with the inlet row replaced by
    /// `u_0 - inlet`.
    pub fn steady_residual(&self, u: &[f64], inlet: f64) -> Vec<f64> {
        let ku = self.stiffness().mul_vec(u);
        let mut r: Vec<f64> = ku.iter().zip(self.convection(u, u)).map(|(k, c)| self.nu * k + c).collect();
        r[0] = u[0] - inlet;
        r
    }

    fn steady_newton(&self, inlet: f64, guess: Vec<f64>, max_iter: usize) -> Result<Vec<f64>> {
        let mut u = guess;
        let stiff = self.stiffness();
        let mut residual = f64::INFINITY;
        for _ in 0..=max_iter {
            let r = self.steady_residual(&u, inlet);
            residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if residual <= 1e-12 {
                return Ok(u);
            }
            if !residual.is_finite() {
                break;
            }
            let mut jac = self.convection_jacobian(&u, &u);
            for i in 0..self.len() {
                jac.diag[i] += self.nu * stiff.diag[i];
                jac.lower[i] += self.nu * stiff.lower[i];
                jac.upper[i] += self.nu * stiff.upper[i];
            }
            jac.diag[0] = 1.0;
            jac.upper[0] = 0.0;
            let delta = jac.solve(&r).ok_or(Error::Singular { step: 0 })?;
            u.iter_mut().zip(delta).for_each(|(x, d)| *x -= d);
        }
        Err(Error::NoConvergence { iterations: max_iter, residual })
    }
}

/// One Newton-linearized theta-step at a time.
#[derive(Debug, Clone)]
pub struct Stepper {
    op: BurgersOperator,
    stiffness: Tridiagonal,
    theta: f64,
    dt: f64,
}

impl Stepper {
    pub fn new(op: BurgersOperator, theta: f64, dt: f64) -> Self {
        let stiffness = op.stiffness();
        Self { op, stiffness, theta, dt }
    }

    pub fn from_config(config: &FomConfig) -> Result<Self> {
        Ok(Self::new(BurgersOperator::from_config(config)?, config.theta, config.dt()))
    }

    pub fn operator(&self) -> &BurgersOperator {
        &self.op
    }

    /// Advance `u` by one step. `inlet_theta` is the Dirichlet value of the
    /// intermediate state; `load` is an optional nodal forcing evaluated at
    /// `t_i + theta dt`. `step` only labels errors.
    pub fn step(&self, u: &[f64], inlet_theta: f64, load: Option<&[f64]>, step: usize) -> Result<Vec<f64>> {
        let n = self.op.len();
        let w = self.op.grid.weights();
        let c = 1.0 / (self.theta * self.dt);
        let nu = self.op.nu;
        let mut a = self.op.convection_jacobian(u, u);
        for i in 0..n {
            a.diag[i] += c * w[i] + nu * self.stiffness.diag[i];
            a.lower[i] += nu * self.stiffness.lower[i];
            a.upper[i] += nu * self.stiffness.upper[i];
        }
        let mut rhs = self.op.convection(u, u);
        for i in 0..n {
            rhs[i] += c * w[i] * u[i];
            if let Some(f) = load {
                rhs[i] += w[i] * f[i];
            }
        }
        a.diag[0] = 1.0;
        a.upper[0] = 0.0;
        rhs[0] = inlet_theta;
        let u_theta = a.solve(&rhs).ok_or(Error::Singular { step })?;
        let next: Vec<f64> = u_theta
            .iter()
            .zip(u)
            .map(|(ut, ui)| (ut - (1.0 - self.theta) * ui) / self.theta)
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        Ok(next)
    }
}

/// All states `u^0, ..., u^m` for prescribed inlet values `g(t_0..t_m)`,
/// initial state `u0` and an optional forcing `f(t, x)`.
pub fn integrate(
    config: &FomConfig,
    inlet: &[f64],
    u0: Vec<f64>,
    forcing: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<Vec<Vec<f64>>> {
    let stepper = Stepper::from_config(config)?;
    if inlet.len() != config.steps + 1 {
        return Err(Error::Dimension { expected: config.steps + 1, found: inlet.len() });
    }
    if u0.len() != config.nodes {
        return Err(Error::Dimension { expected: config.nodes, found: u0.len() });
    }
    let dt = config.dt();
    let theta = config.theta;
    let nodes = stepper.op.grid.nodes().to_vec();
    let mut states = Vec::with_capacity(config.steps + 1);
    states.push(u0);
    for i in 0..config.steps {
        let g = theta * inlet[i + 1] + (1.0 - theta) * inlet[i];
        let t = (i as f64 + theta) * dt;
        let load = forcing.map(|f| nodes.iter().map(|&x| f(t, x)).collect::<Vec<_>>());
        let next = stepper.step(&states[i], g, load.as_deref(), i + 1)?;
        states.push(next);
    }
    Ok(states)
}

/// Full-order trajectory for one random input, snapshots at every
/// `snapshot_stride`-th step starting from `t_1`.
pub fn solve_fom(config: &FomConfig, input: &RandomInput) -> Result<Trajectory> {
    config.validate()?;
    if input.len() != config.steps + 1 {
        return Err(Error::Dimension { expected: config.steps + 1, found: input.len() });
    }
    let s = config.inlet_scale;
    let inlet: Vec<f64> = input.strength.iter().map(|a| a * s).collect();
    let mut u0 = vec![0.0; config.nodes];
    u0[0] = inlet[0];
    let states = integrate(config, &inlet, u0, None)?;
    let q = config.snapshot_stride;
    let snaps = states.into_iter().skip(q).step_by(q).map(Snapshot).collect();
    Ok(Trajectory { input: input.clone(), snaps })
}

/// Steady solution with inlet value `a s`; Newton from the constant state.
pub fn solve_steady(config: &FomConfig, a: f64) -> Result<Snapshot> {
    if !(a > 0.0) {
        return Err(Error::Invalid("steady strength must be positive".into()));
    }
    let op = BurgersOperator::from_config(config)?;
    let inlet = a * config.inlet_scale;
    op.steady_newton(inlet, vec![inlet; config.nodes], 50).map(Snapshot)
}

/// `w = (u_{a1} - u_{a2}) / (a1 - a2)`.
pub fn build_lifting(config: &FomConfig) -> Result<Snapshot> {
    let u1 = solve_steady(config, config.a1)?;
    let u2 = solve_steady(config, config.a2)?;
    let d = config.a1 - config.a2;
    Ok(Snapshot(u1.iter().zip(u2.iter()).map(|(x, y)| (x - y) / d).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftingData {
    pub w: Snapshot,
    pub u_bar: Snapshot,
}

impl LiftingData {
    pub fn build(config: &FomConfig, ensemble: &Ensemble) -> Result<Self> {
        let w = build_lifting(config)?;
        let u_bar = ensemble_mean(ensemble, &w)?;
        Ok(Self { w, u_bar })
    }

    /// `u_bar + a w`.
    pub fn offset(&self, a: f64) -> Vec<f64> {
        self.u_bar.iter().zip(self.w.iter()).map(|(u, w)| u + a * w).collect()
    }
}

/// `(1/n) sum_i (1/J) sum_j (u_i(t_j) - A_i(t_j) w)`.
pub fn ensemble_mean(ensemble: &Ensemble, w: &[f64]) -> Result<Snapshot> {
    ensemble.grid.check(w.len())?;
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let m = ensemble.grid.len();
    let mut total = vec![0.0; m];
    for traj in &ensemble.trajectories {
        let stride = traj.stride()?;
        let mut inner = vec![0.0; m];
        for (j, snap) in traj.snaps.iter().enumerate() {
            let a = traj.input.at_snapshot(j + 1, stride);
            for ((acc, u), wi) in inner.iter_mut().zip(snap.iter()).zip(w) {
                *acc += u - a * wi;
            }
        }
        let jn = traj.len() as f64;
        total.iter_mut().zip(inner).for_each(|(t, v)| *t += v / jn);
    }
    let n = ensemble.len() as f64;
    Ok(Snapshot(total.into_iter().map(|v| v / n).collect()))
}

/// `v(t_j) = u(t_j) - u_bar - A(t_j) w`.
pub fn modified_state(traj: &Trajectory, lifting: &LiftingData) -> Result<Trajectory> {
    let stride = traj.stride()?;
    let snaps = traj
        .snaps
        .iter()
        .enumerate()
        .map(|(j, snap)| {
            if snap.len() != lifting.w.len() {
                return Err(Error::Dimension { expected: lifting.w.len(), found: snap.len() });
            }
            let off = lifting.offset(traj.input.at_snapshot(j + 1, stride));
            Ok(Snapshot(snap.iter().zip(off).map(|(u, o)| u - o).collect()))
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory { input: traj.input.clone(), snaps })
}

/// Ensemble of modified states sharing the grids of `ensemble`.
pub fn modified_ensemble(ensemble: &Ensemble, lifting: &LiftingData) -> Result<Ensemble> {
    let trajectories = ensemble
        .trajectories
        .iter()
        .map(|t| modified_state(t, lifting))
        .collect::<Result<_>>()?;
    Ensemble::new(ensemble.grid.clone(), ensemble.time, trajectories)
}
