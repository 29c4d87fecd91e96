#![allow(dead_code)]

use std::f64::consts::PI;

use cpod_core::ensemble::RandomInput;
use cpod_core::fom::{integrate, solve_fom, solve_steady, FomConfig};

pub const MMS_NU: f64 = 0.1;

pub fn mms_exact(t: f64, x: f64) -> f64 {
    1.0 + 0.5 * t.sin() * (PI * x).cos()
}

pub fn mms_forcing(t: f64, x: f64) -> f64 {
    let u = mms_exact(t, x);
    let ut = 0.5 * t.cos() * (PI * x).cos();
    let ux = -0.5 * PI * t.sin() * (PI * x).sin();
    let uxx = -0.5 * PI * PI * t.sin() * (PI * x).cos();
    ut - MMS_NU * uxx + u * ux
}

/// Terminal `L2` error of the manufactured solution with `8 * 2^level`
/// cells and `10 * 2^level` steps on `[0, 1]`.
pub fn mms_error(level: u32) -> f64 {
    let cells = 8 << level;
    let cfg = FomConfig { re: 1.0 / MMS_NU, nodes: cells + 1, horizon: 1.0, steps: 10 << level, ..FomConfig::default() };
    let inlet: Vec<f64> = cfg.instants().iter().map(|&t| mms_exact(t, 0.0)).collect();
    let grid = cfg.grid().unwrap();
    let u0: Vec<f64> = grid.nodes().iter().map(|&x| mms_exact(0.0, x)).collect();
    let states = integrate(&cfg, &inlet, u0, Some(&mms_forcing)).unwrap();
    let last = states.last().unwrap();
    let err: Vec<f64> = grid.nodes().iter().zip(last).map(|(&x, u)| u - mms_exact(1.0, x)).collect();
    grid.inner_product(&err, &err).unwrap().sqrt()
}

/// Observed orders between consecutive refinement levels.
pub fn mms_orders(levels: u32) -> Vec<f64> {
    let errors: Vec<f64> = (0..levels).map(mms_error).collect();
    errors.windows(2).map(|p| (p[0] / p[1]).log2()).collect()
}

/// Max-norm distance between a long constant-strength run and the steady
/// solve at the same strength.
pub fn steady_gap(horizon: f64) -> f64 {
    let base = FomConfig::default();
    let cfg = FomConfig { horizon, steps: (horizon / base.dt()).round() as usize, snapshot_stride: 100, ..base };
    let input = RandomInput::custom(vec![cfg.a1; cfg.steps + 1]).unwrap();
    let traj = solve_fom(&cfg, &input).unwrap();
    let steady = solve_steady(&cfg, cfg.a1).unwrap();
    traj.snaps.last().unwrap().iter().zip(steady.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

pub struct Separated {
    pub train_labels: Vec<usize>,
    pub truth: Vec<usize>,
    pub predicted: Vec<usize>,
    pub error_rate: f64,
}

/// Two trig families with means 45 and 95, alternating by sample index,
/// clustered with `K = 2` and classified by naive Bayes.
pub fn separated_families() -> Separated {
    use cpod_core::ensemble::{Ensemble, Snapshot};
    use cpod_core::fom::{modified_ensemble, sample_trig, LiftingData, TrigParams};
    use cpod_core::nbayes::{confusion, error_rate_estimate, fit, LabelledInputs};
    use cpod_core::pod::{pod_basis, select_dimension};
    use cpod_core::rom::true_label;
    use cpod_core::tgcvt::{lloyd_tgcvt, LloydOptions};
    use rand::SeedableRng;

    let cfg = FomConfig::default();
    let family = |i: usize, salt: u64| {
        let mean = if i % 2 == 0 { 45.0 } else { 95.0 };
        sample_trig(&cfg, &TrigParams { mean, ..TrigParams::default() }, salt * 1000 + i as u64).unwrap()
    };
    let solve = |salt: u64| {
        let trajs = (0..30).map(|i| solve_fom(&cfg, &family(i, salt)).unwrap()).collect();
        Ensemble::new(cfg.grid().unwrap(), cfg.time_grid().unwrap(), trajs).unwrap()
    };
    let (train, test) = (solve(1), solve(2));
    let lifting = LiftingData::build(&cfg, &train).unwrap();
    let modified = modified_ensemble(&train, &lifting).unwrap();
    let snaps: Vec<&Snapshot> = modified.snapshots().collect();
    let d = select_dimension(pod_basis(&snaps, &modified.grid, 1).unwrap().eigvals(), 0.97).unwrap();
    let tess = lloyd_tgcvt(&modified, 2, &[d, d], LloydOptions { max_iter: 50, restarts: 5 }, 6).unwrap();
    let inputs = train.trajectories.iter().map(|t| t.input.strength.clone()).collect();
    let model = fit(&LabelledInputs::new(inputs, tess.labels.clone(), 2).unwrap()).unwrap();
    let test_mod = modified_ensemble(&test, &lifting).unwrap();
    let truth: Vec<usize> = test_mod.trajectories.iter().map(|t| true_label(t, &tess).unwrap()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let predicted: Vec<usize> = test.trajectories.iter().map(|t| model.predict(&t.input.strength, &mut rng).unwrap()).collect();
    let error_rate = error_rate_estimate(&confusion(&truth, &predicted, 2).unwrap(), &model.priors).unwrap();
    Separated { train_labels: tess.labels, truth, predicted, error_rate }
}
