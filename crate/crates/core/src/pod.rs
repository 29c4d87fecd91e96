//! Method-of-snapshots proper orthogonal decomposition.
//!
//! For `N` snapshots `v_i` the correlation matrix is
//! `R_ij = <v_i, v_j> / N`; its eigenpairs `(sigma_j, y_j)` give the modes
//! `phi_j = sum_i y_ij v_i / sqrt(N sigma_j)`. When the grid has fewer nodes
//! than there are snapshots the same nonzero spectrum is obtained from the
//! `M x M` weighted spatial covariance `W^1/2 V V^T W^1/2 / N`, which is what
//! the clustering loop accumulates per trajectory.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::ensemble::{Snapshot, SpatialGrid};
use crate::error::{Error, Result};

/// Eigenvalues at or below `RANK_CUTOFF * sigma_1` are numerically zero.
pub const RANK_CUTOFF: f64 = 1e-12;

impl AsRef<[f64]> for Snapshot {
    fn as_ref(&self) -> &[f64] {
        self
    }
}

/// Orthonormal POD modes together with the full correlation spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodBasis {
    modes: Vec<Snapshot>,
    eigvals: Vec<f64>,
    snapshot_count: usize,
    grid: SpatialGrid,
}

impl PodBasis {
    /// Assembles a basis from already orthonormal modes. Used when loading
    /// persisted artifacts and by tests that need hand-built subspaces.
    pub fn from_parts(
        modes: Vec<Snapshot>,
        eigvals: Vec<f64>,
        snapshot_count: usize,
        grid: SpatialGrid,
    ) -> Result<Self> {
        for m in &modes {
            if m.len() != grid.len() {
                return Err(Error::Dimension { expected: grid.len(), found: m.len() });
            }
        }
        Ok(Self { modes, eigvals, snapshot_count, grid })
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Snapshot] {
        &self.modes
    }

    /// Descending correlation spectrum `sigma_1 >= sigma_2 >= ... >= 0`.
    ///
    /// On the spatial route only `min(M, N)` values are stored; the rest of
    /// the `N`-long spectrum is identically zero.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshot_count
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Sum of the discarded eigenvalues `sum_{j>d} sigma_j`.
    pub fn tail(&self) -> f64 {
        self.eigvals.iter().skip(self.dim()).sum()
    }

    pub fn energy_ratio(&self) -> Result<f64> {
        let total: f64 = self.eigvals.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("zero total spectrum".into()));
        }
        let kept: f64 = self.eigvals.iter().take(self.dim()).sum();
        Ok(kept / total)
    }

    pub fn numerical_rank(&self) -> usize {
        numerical_rank(&self.eigvals)
    }

    fn check(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.grid.len() {
            return Err(Error::Dimension { expected: self.grid.len(), found: s.len() });
        }
        Ok(())
    }

    /// `<s, phi_l>` for every mode.
    pub fn coefficients(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check(s)?;
        Ok(self.coefficients_unchecked(s))
    }

    pub(crate) fn coefficients_unchecked(&self, s: &[f64]) -> Vec<f64> {
        self.modes.iter().map(|phi| self.grid.dot(s, phi)).collect()
    }

    pub fn combine(&self, coeffs: &[f64]) -> Snapshot {
        let mut out = vec![0.0; self.grid.len()];
        for (c, phi) in coeffs.iter().zip(&self.modes) {
            for (o, p) in out.iter_mut().zip(phi.iter()) {
                *o += c * p;
            }
        }
        Snapshot(out)
    }

    /// Squared `L2(D)` norm of `s - Pi s`, computed from the explicit residual.
    pub(crate) fn residual_sq_unchecked(&self, s: &[f64]) -> f64 {
        let p = self.combine(&self.coefficients_unchecked(s));
        self.grid
            .weights()
            .iter()
            .zip(s.iter().zip(p.iter()))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum()
    }
}

/// `Pi^d s = sum_l <s, phi_l> phi_l`.
pub fn project(s: &[f64], basis: &PodBasis) -> Result<Snapshot> {
    let c = basis.coefficients(s)?;
    Ok(basis.combine(&c))
}

fn check_grid<S: AsRef<[f64]>>(snaps: &[S], grid: &SpatialGrid) -> Result<()> {
    if snaps.is_empty() {
        return Err(Error::Empty("snapshot list"));
    }
    for s in snaps {
        if s.as_ref().len() != grid.len() {
            return Err(Error::Dimension { expected: grid.len(), found: s.as_ref().len() });
        }
    }
    Ok(())
}

/// `R_ij = <v_i, v_j> / N`.
pub fn correlation_matrix<S: AsRef<[f64]>>(snaps: &[S], grid: &SpatialGrid) -> Result<DMatrix<f64>> {
    check_grid(snaps, grid)?;
    let n = snaps.len();
    let inv = 1.0 / n as f64;
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = grid.dot(snaps[i].as_ref(), snaps[j].as_ref()) * inv;
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(r)
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and the
/// matching eigenvectors stored column-wise.
pub fn sym_eig(r: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if r.nrows() != r.ncols() {
        return Err(Error::Dimension { expected: r.nrows(), found: r.ncols() });
    }
    let n = r.nrows();
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    let scale = r.amax();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((r[(i, j)] - r[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(if scale > 0.0 { asym / scale } else { asym }));
    }
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |row, col| eig.eigenvectors[(row, order[col])]);
    Ok((vals, vecs))
}

pub fn numerical_rank(eigvals: &[f64]) -> usize {
    let top = eigvals.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return 0;
    }
    eigvals.iter().take_while(|&&s| s > RANK_CUTOFF * top).count()
}

/// `T sum_{j>d} sigma_j`; zero when `d` covers the whole spectrum.
pub fn pod_energy(eigvals: &[f64], d: usize, horizon: f64) -> f64 {
    horizon * eigvals.iter().skip(d).sum::<f64>()
}

/// Smallest `d` whose cumulative energy ratio reaches `ratio`.
pub fn select_dimension(eigvals: &[f64], ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Invalid(format!("energy ratio must lie in (0, 1], got {ratio}")));
    }
    let total: f64 = eigvals.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Invalid("all-zero spectrum".into()));
    }
    let mut cum = 0.0;
    for (i, s) in eigvals.iter().enumerate() {
        cum += s;
        if cum / total >= ratio {
            return Ok(i + 1);
        }
    }
    Ok(eigvals.len())
}

/// Which eigenproblem realizes the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Pick the smaller of the two problems.
    Auto,
    /// `N x N` snapshot correlation.
    Snapshot,
    /// `M x M` weighted spatial covariance.
    Spatial,
}

pub fn pod_basis<S: AsRef<[f64]>>(snaps: &[S], grid: &SpatialGrid, d: usize) -> Result<PodBasis> {
    pod_basis_with(snaps, grid, d, Route::Auto)
}

pub fn pod_basis_with<S: AsRef<[f64]>>(
    snaps: &[S],
    grid: &SpatialGrid,
    d: usize,
    route: Route,
) -> Result<PodBasis> {
    check_grid(snaps, grid)?;
    let use_spatial = match route {
        Route::Auto => grid.len() < snaps.len(),
        Route::Snapshot => false,
        Route::Spatial => true,
    };
    if use_spatial {
        let mut cov = SpatialCovariance::new(grid.len());
        cov.add_snapshots(grid, snaps);
        return cov.pod_basis(grid, d);
    }

    let n = snaps.len();
    let r = correlation_matrix(snaps, grid)?;
    let (mut vals, vecs) = sym_eig(&r)?;
    clamp(&mut vals);
    check_rank(&vals, d)?;
    let modes = (0..d)
        .map(|j| {
            let scale = 1.0 / (n as f64 * vals[j]).sqrt();
            let mut phi = vec![0.0; grid.len()];
            for (i, v) in snaps.iter().enumerate() {
                let c = vecs[(i, j)] * scale;
                for (p, x) in phi.iter_mut().zip(v.as_ref()) {
                    *p += c * x;
                }
            }
            fix_sign(&mut phi);
            Snapshot(phi)
        })
        .collect();
    Ok(PodBasis { modes, eigvals: vals, snapshot_count: n, grid: grid.clone() })
}

fn clamp(vals: &mut [f64]) {
    for v in vals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn check_rank(vals: &[f64], d: usize) -> Result<()> {
    let rank = numerical_rank(vals);
    if d > rank {
        return Err(Error::Rank { requested: d, rank });
    }
    Ok(())
}

fn fix_sign(phi: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in phi.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        phi.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Running sum of `(W^1/2 v)(W^1/2 v)^T` over snapshots.
///
/// Covariances of disjoint snapshot sets add, so per-cluster POD reduces to
/// summing cached per-trajectory blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    sum: DMatrix<f64>,
    count: usize,
}

impl SpatialCovariance {
    pub fn new(m: usize) -> Self {
        Self { sum: DMatrix::zeros(m, m), count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sum
    }

    pub fn add_snapshots<S: AsRef<[f64]>>(&mut self, grid: &SpatialGrid, snaps: &[S]) {
        let m = grid.len();
        if snaps.is_empty() {
            return;
        }
        let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
        let b = DMatrix::from_fn(m, snaps.len(), |i, j| sqrt_w[i] * snaps[j].as_ref()[i]);
        self.sum.gemm(1.0, &b, &b.transpose(), 1.0);
        self.count += snaps.len();
    }

    pub fn add(&mut self, other: &SpatialCovariance) {
        self.sum += &other.sum;
        self.count += other.count;
    }

    /// `sum_l <phi_l, C phi_l>` over the modes of `basis`, i.e. the captured
    /// energy `sum_v sum_l <v, phi_l>^2` of the accumulated snapshots.
    pub fn captured(&self, basis: &PodBasis) -> f64 {
        let sqrt_w: Vec<f64> = basis.grid.weights().iter().map(|w| w.sqrt()).collect();
        basis
            .modes
            .iter()
            .map(|phi| {
                let z = nalgebra::DVector::from_iterator(
                    phi.len(),
                    phi.iter().zip(&sqrt_w).map(|(p, s)| p * s),
                );
                (&self.sum * &z).dot(&z)
            })
            .sum()
    }

    pub fn pod_basis(&self, grid: &SpatialGrid, d: usize) -> Result<PodBasis> {
        if self.count == 0 {
            return Err(Error::Empty("snapshot list"));
        }
        if self.sum.nrows() != grid.len() {
            return Err(Error::Dimension { expected: grid.len(), found: self.sum.nrows() });
        }
        let c = &self.sum / self.count as f64;
        let (mut vals, vecs) = sym_eig(&c)?;
        clamp(&mut vals);
        check_rank(&vals, d)?;
        let inv_sqrt_w: Vec<f64> = grid.weights().iter().map(|w| 1.0 / w.sqrt()).collect();
        let modes = (0..d)
            .map(|j| {
                let mut phi: Vec<f64> =
                    (0..grid.len()).map(|i| vecs[(i, j)] * inv_sqrt_w[i]).collect();
                fix_sign(&mut phi);
                Snapshot(phi)
            })
            .collect();
        Ok(PodBasis { modes, eigvals: vals, snapshot_count: self.count, grid: grid.clone() })
    }
}

/// Principal angles (radians, ascending) between two equal-dimension spans.
pub fn principal_angles(a: &PodBasis, b: &PodBasis) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), found: b.dim() });
    }
    if a.dim() == 0 {
        return Ok(Vec::new());
    }
    let d = a.dim();
    let g = DMatrix::from_fn(d, d, |i, j| a.grid.dot(&a.modes[i], &b.modes[j]));
    // Small angles come from the sines of the residual `B - A G`, where the
    // cosines have lost all their digits.
    let m = a.grid.len();
    let root_w: Vec<f64> = a.grid.weights().iter().map(|w| w.sqrt()).collect();
    let r = DMatrix::from_fn(m, d, |x, j| {
        let fit: f64 = (0..d).map(|i| a.modes[i][x] * g[(i, j)]).sum();
        root_w[x] * (b.modes[j][x] - fit)
    });
    let mut cos: Vec<f64> = g.svd(false, false).singular_values.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    let mut sin: Vec<f64> = r.svd(false, false).singular_values.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    sin.sort_by(f64::total_cmp);
    let mut angles: Vec<f64> = cos
        .iter()
        .zip(&sin)
        .map(|(&c, &s)| if c * c >= 0.5 { s.asin() } else { c.acos() })
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Maximum `|<phi_i, phi_j> - delta_ij|` over the modes.
pub fn orthonormality_defect(basis: &PodBasis) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in basis.modes.iter().enumerate() {
        for (j, b) in basis.modes.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((basis.grid.dot(a, b) - target).abs());
        }
    }
    worst
}

pub fn write_spectrum_csv<W: Write>(out: &mut W, eigvals: &[f64]) -> Result<()> {
    writeln!(out, "index,eigenvalue")?;
    for (i, s) in eigvals.iter().enumerate() {
        writeln!(out, "{},{s}", i + 1)?;
    }
    Ok(())
}

/// One row per node: `x, phi_1(x), ..., phi_d(x)`.
pub fn write_modes_csv<W: Write>(out: &mut W, basis: &PodBasis) -> Result<()> {
    write!(out, "x")?;
    for l in 1..=basis.dim() {
        write!(out, ",mode_{l}")?;
    }
    writeln!(out)?;
    for (i, x) in basis.grid.nodes().iter().enumerate() {
        write!(out, "{x}")?;
        for phi in &basis.modes {
            write!(out, ",{}", phi[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_snaps(count: usize, m: usize, seed: u64) -> Vec<Snapshot> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| Snapshot((0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect()
    }

    #[test]
    fn correlation_of_identical_snapshots() {
        let g = SpatialGrid::uniform(3).unwrap();
        // weights sum to 1, so the constant sqrt(2) field has <v, v> = 2
        let v = Snapshot(vec![2f64.sqrt(); 3]);
        let r = correlation_matrix(&[v.clone(), v], &g).unwrap();
        for x in r.iter() {
            assert!((x - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn correlation_of_orthogonal_unit_snapshots() {
        let g = SpatialGrid::uniform(3).unwrap();
        let a = Snapshot(vec![2.0, 0.0, 0.0]);
        let b = Snapshot(vec![0.0, 2f64.sqrt(), 0.0]);
        let r = correlation_matrix(&[a, b], &g).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((r[(1, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(r[(0, 1)], 0.0);
    }

    #[test]
    fn correlation_matches_hand_assembly() {
        let g = SpatialGrid::uniform(6).unwrap();
        let snaps = random_snaps(4, 6, 11);
        let r = correlation_matrix(&snaps, &g).unwrap();
        let h = 0.2;
        let w = [h / 2.0, h, h, h, h, h / 2.0];
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..6 {
                    s += w[k] * snaps[i][k] * snaps[j][k];
                }
                assert!((r[(i, j)] - s / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn correlation_rejects_empty() {
        let g = SpatialGrid::uniform(3).unwrap();
        let none: Vec<Snapshot> = Vec::new();
        assert!(matches!(correlation_matrix(&none, &g), Err(Error::Empty(_))));
    }

    #[test]
    fn sym_eig_diagonal() {
        let (vals, vecs) = sym_eig(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        assert_eq!(vals, vec![2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((vecs[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sym_eig_rank_one() {
        let (vals, vecs) = sym_eig(&DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-14);
        assert!(vals[1].abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[(0, 0)].abs() - s).abs() < 1e-14);
        assert!((vecs[(0, 0)] - vecs[(1, 0)]).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_two_by_two_quadratic_formula() {
        let (a, b, c) = (3.0, 1.25, -0.5);
        let (vals, _) = sym_eig(&DMatrix::from_row_slice(2, 2, &[a, b, b, c])).unwrap();
        let mean = 0.5 * (a + c);
        let disc = ((0.5 * (a - c)).powi(2) + b * b).sqrt();
        assert!((vals[0] - (mean + disc)).abs() < 1e-13);
        assert!((vals[1] - (mean - disc)).abs() < 1e-13);
    }

    #[test]
    fn sym_eig_random_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let r = &a + a.transpose();
        let (vals, vecs) = sym_eig(&r).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for j in 0..5 {
            let y = vecs.column(j);
            let res = (&r * y - y * vals[j]).norm();
            assert!(res <= 1e-9 * r.norm());
        }
        let gram = vecs.transpose() * &vecs;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(sym_eig(&r), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn single_snapshot_basis_is_normalized_snapshot() {
        let g = SpatialGrid::uniform(7).unwrap();
        let v = Snapshot(vec![0.0, 1.0, 3.0, -2.0, 0.5, 0.0, 1.0]);
        let b = pod_basis(&[v.clone()], &g, 1).unwrap();
        let norm = g.inner_product(&v, &v).unwrap().sqrt();
        for (p, x) in b.modes()[0].iter().zip(v.iter()) {
            assert!((p - x / norm).abs() < 1e-13);
        }
    }

    #[test]
    fn orthogonal_snapshots_give_their_normalizations() {
        let g = SpatialGrid::uniform(5).unwrap();
        let a = Snapshot(vec![0.0, 3.0, 0.0, 0.0, 0.0]);
        let c = Snapshot(vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        let b = pod_basis(&[a.clone(), c.clone()], &g, 2).unwrap();
        // <a,a> = 9/4 > <c,c> = 1/4, so a comes first
        let na = g.norm_sq(&a).sqrt();
        let nc = g.norm_sq(&c).sqrt();
        for k in 0..5 {
            assert!((b.modes()[0][k] - a[k] / na).abs() < 1e-13);
            assert!((b.modes()[1][k] - c[k] / nc).abs() < 1e-13);
        }
    }

    #[test]
    fn rank_error_when_dimension_too_large() {
        let g = SpatialGrid::uniform(5).unwrap();
        let v = Snapshot(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let snaps = vec![v.clone(), v.clone(), v];
        assert!(matches!(pod_basis(&snaps, &g, 2), Err(Error::Rank { requested: 2, rank: 1 })));
    }

    #[test]
    fn spectral_identity_random() {
        let g = SpatialGrid::uniform(9).unwrap();
        let snaps = random_snaps(6, 9, 3);
        for d in 0..=6 {
            let b = pod_basis(&snaps, &g, d).unwrap();
            let err: f64 =
                snaps.iter().map(|v| b.residual_sq_unchecked(v)).sum::<f64>() / snaps.len() as f64;
            let tail = b.tail();
            assert!((err - tail).abs() <= 1e-8 * tail.max(1e-300) + 1e-15, "d={d}: {err} vs {tail}");
            assert!(orthonormality_defect(&b) < 1e-10);
        }
    }

    #[test]
    fn routes_agree() {
        let g = SpatialGrid::uniform(8).unwrap();
        let snaps = random_snaps(12, 8, 9);
        let a = pod_basis_with(&snaps, &g, 4, Route::Snapshot).unwrap();
        let b = pod_basis_with(&snaps, &g, 4, Route::Spatial).unwrap();
        for (x, y) in a.eigvals().iter().zip(b.eigvals()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.eigvals()[8..].iter().all(|&s| s.abs() < 1e-12));
        for (p, q) in a.modes().iter().zip(b.modes()) {
            for (x, y) in p.iter().zip(q.iter()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trace_identity() {
        let g = SpatialGrid::uniform(10).unwrap();
        let snaps = random_snaps(7, 10, 21);
        let b = pod_basis(&snaps, &g, 2).unwrap();
        let trace: f64 = snaps.iter().map(|v| g.norm_sq(v)).sum::<f64>() / 7.0;
        let s: f64 = b.eigvals().iter().sum();
        assert!((s - trace).abs() <= 1e-10 * trace);
    }

    #[test]
    fn pod_energy_values() {
        assert_eq!(pod_energy(&[2.0, 1.0, 0.0], 3, 1.0), 0.0);
        assert_eq!(pod_energy(&[2.0, 1.0, 1.0], 1, 2.0), 4.0);
    }

    #[test]
    fn select_dimension_values() {
        assert_eq!(select_dimension(&[4.0, 3.0, 2.0, 1.0], 0.9).unwrap(), 3);
        assert_eq!(select_dimension(&[4.0, 3.0, 2.0, 0.0, 0.0], 1.0).unwrap(), 3);
        assert!(select_dimension(&[0.0, 0.0], 0.5).is_err());
        assert!(select_dimension(&[1.0], 0.0).is_err());
    }

    #[test]
    fn projection_properties() {
        let g = SpatialGrid::uniform(9).unwrap();
        let snaps = random_snaps(5, 9, 8);
        let b = pod_basis(&snaps, &g, 2).unwrap();
        let phi = b.modes()[0].clone();
        let p = project(&phi, &b).unwrap();
        for (x, y) in p.iter().zip(phi.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let s = &random_snaps(1, 9, 99)[0];
        let ps = project(s, &b).unwrap();
        let res: Vec<f64> = s.iter().zip(ps.iter()).map(|(a, b)| a - b).collect();
        for m in b.modes() {
            assert!(g.dot(&res, m).abs() < 1e-10);
        }
        // orthogonal complement projects to zero
        let q = project(&res, &b).unwrap();
        assert!(q.iter().all(|x| x.abs() < 1e-12));
        assert!(matches!(project(&[1.0; 3], &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn sign_convention_pins_largest_entry_positive() {
        let g = SpatialGrid::uniform(4).unwrap();
        let v = Snapshot(vec![0.0, -5.0, 1.0, 0.0]);
        let b = pod_basis(&[v], &g, 1).unwrap();
        assert!(b.modes()[0][1] > 0.0);
    }

    #[test]
    fn spectrum_csv() {
        let mut out = Vec::new();
        write_spectrum_csv(&mut out, &[2.0, 0.5]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "index,eigenvalue\n1,2\n2,0.5\n");
    }

    #[test]
    fn principal_angles_resolve_tiny_rotations() {
        let g = SpatialGrid::from_parts(vec![0.0, 1.0, 2.0], vec![1.0; 3]).unwrap();
        let e1 = PodBasis::from_parts(vec![Snapshot(vec![1.0, 0.0, 0.0])], vec![1.0], 1, g.clone()).unwrap();
        for t in [1e-11f64, 1e-6, 0.7, 1.5] {
            let r = PodBasis::from_parts(vec![Snapshot(vec![t.cos(), t.sin(), 0.0])], vec![1.0], 1, g.clone()).unwrap();
            let a = principal_angles(&e1, &r).unwrap()[0];
            assert!((a - t).abs() <= 1e-15 + 1e-12 * t, "{t}: {a}");
        }
        assert_eq!(principal_angles(&e1, &e1).unwrap(), vec![0.0]);
    }

    proptest! {
        #[test]
        fn projection_idempotent(seed in 0u64..500, d in 1usize..4) {
            let g = SpatialGrid::uniform(8).unwrap();
            let snaps = random_snaps(5, 8, seed);
            let b = pod_basis(&snaps, &g, d).unwrap();
            let s = &random_snaps(1, 8, seed + 1000)[0];
            let p1 = project(s, &b).unwrap();
            let p2 = project(&p1, &b).unwrap();
            for (x, y) in p1.iter().zip(p2.iter()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn select_dimension_monotone(
            mut vals in prop::collection::vec(0.0f64..10.0, 1..12),
            r1 in 0.01f64..1.0,
            r2 in 0.01f64..1.0,
        ) {
            vals.sort_by(|a, b| b.total_cmp(a));
            prop_assume!(vals[0] > 0.0);
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(select_dimension(&vals, lo).unwrap() <= select_dimension(&vals, hi).unwrap());
        }
    }
}
