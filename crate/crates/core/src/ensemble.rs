//! Spatial and temporal grids, snapshots, trajectories and ensembles.
//!
//! All fields live on a 1D grid over `[0, 1]` with lumped-mass (trapezoidal)
//! quadrature weights; the weighted sum `sum_i w_i a_i b_i` is the discrete
//! `L2(D)` inner product used everywhere downstream.

use std::fs;
use std::io::Write;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CPOD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SpatialGrid {
    /// Uniform grid with `count` nodes on `[0, 1]`.
    pub fn uniform(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Invalid(format!("grid needs at least 2 nodes, got {count}")));
        }
        let h = 1.0 / (count - 1) as f64;
        let mut nodes: Vec<f64> = (0..count).map(|i| i as f64 * h).collect();
        nodes[count - 1] = 1.0;
        Self::from_nodes(nodes)
    }

    /// Grid with lumped P1 mass weights derived from the node positions.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        let count = nodes.len();
        if count < 2 {
            return Err(Error::Invalid(format!("grid needs at least 2 nodes, got {count}")));
        }
        if nodes[0] != 0.0 || nodes[count - 1] != 1.0 {
            return Err(Error::Invalid("grid must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("grid nodes must be strictly increasing".into()));
        }
        let mut weights = vec![0.0; count];
        for (e, w) in nodes.windows(2).enumerate() {
            let half = 0.5 * (w[1] - w[0]);
            weights[e] += half;
            weights[e + 1] += half;
        }
        Ok(Self { nodes, weights })
    }

    pub(crate) fn from_parts(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.len() < 2 {
            return Err(Error::Format("inconsistent grid arrays".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Format("grid weights must be positive".into()));
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn check(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Dimension { expected: self.len(), found: len });
        }
        Ok(())
    }

    /// Weighted inner product `sum_i w_i a_i b_i`.
    pub fn inner_product(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check(a.len())?;
        self.check(b.len())?;
        Ok(self.dot(a, b))
    }

    pub(crate) fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x * y))
            .sum()
    }

    pub(crate) fn norm_sq(&self, a: &[f64]) -> f64 {
        self.dot(a, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    count: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, count: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Invalid(format!("time step must be positive, got {dt}")));
        }
        if count == 0 {
            return Err(Error::Invalid("time grid needs at least one instant".into()));
        }
        Ok(Self { dt, count })
    }

    /// Snapshot spacing.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of snapshot instants `t_1..t_J`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.count as f64
    }

    /// `t_j = j dt` for `j = 1..=J`.
    pub fn instants(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.count).map(move |j| j as f64 * self.dt)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot(pub Vec<f64>);

impl Snapshot {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Snapshot {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Snapshot {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Snapshot {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Which generator produced a random input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Trig,
    Hat,
    Custom,
}

impl GeneratorKind {
    fn tag(self) -> u32 {
        match self {
            GeneratorKind::Trig => 0,
            GeneratorKind::Hat => 1,
            GeneratorKind::Custom => 2,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(GeneratorKind::Trig),
            1 => Ok(GeneratorKind::Hat),
            2 => Ok(GeneratorKind::Custom),
            t => Err(Error::Format(format!("unknown generator tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputMeta {
    pub generator: GeneratorKind,
    pub seed: u64,
    /// Generator parameter worth keeping for reporting (hat height `a`).
    pub param: f64,
}

impl Default for InputMeta {
    fn default() -> Self {
        Self { generator: GeneratorKind::Custom, seed: 0, param: 0.0 }
    }
}

/// Strength series `A(t_0), ..., A(t_m)` on the full-order time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInput {
    pub strength: Vec<f64>,
    pub meta: InputMeta,
}

impl RandomInput {
    pub fn new(strength: Vec<f64>, meta: InputMeta) -> Result<Self> {
        if strength.is_empty() {
            return Err(Error::Empty("strength series"));
        }
        if strength.iter().any(|a| !a.is_finite()) {
            return Err(Error::Invalid("strength values must be finite".into()));
        }
        Ok(Self { strength, meta })
    }

    pub fn custom(strength: Vec<f64>) -> Result<Self> {
        Self::new(strength, InputMeta::default())
    }

    pub fn len(&self) -> usize {
        self.strength.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strength.is_empty()
    }

    /// Full-order steps between consecutive snapshots for a trajectory with
    /// `snapshots` instants.
    pub fn stride(&self, snapshots: usize) -> Result<usize> {
        let steps = self.strength.len().saturating_sub(1);
        if snapshots == 0 || steps == 0 || steps % snapshots != 0 {
            return Err(Error::Invalid(format!(
                "{steps} strength intervals are not a multiple of {snapshots} snapshots"
            )));
        }
        Ok(steps / snapshots)
    }

    /// Strength at snapshot `j` (1-based instant `t_j`).
    pub fn at_snapshot(&self, j: usize, stride: usize) -> f64 {
        self.strength[j * stride]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub input: RandomInput,
    /// `u(t_1), ..., u(t_J)`.
    pub snaps: Vec<Snapshot>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    fn check(&self, grid: &SpatialGrid, time: &TimeGrid) -> Result<()> {
        if self.snaps.len() != time.len() {
            return Err(Error::Dimension { expected: time.len(), found: self.snaps.len() });
        }
        for s in &self.snaps {
            grid.check(s.len())?;
        }
        Ok(())
    }

    pub fn stride(&self) -> Result<usize> {
        self.input.stride(self.snaps.len())
    }
}

/// Snapshot quadrature of the space-time norm, `dt sum_j <u_j, u_j>`.
pub fn trajectory_sq_norm(traj: &Trajectory, grid: &SpatialGrid, time: &TimeGrid) -> Result<f64> {
    traj.check(grid, time)?;
    Ok(time.dt() * snapshot_sq_sum(traj, grid))
}

/// `sum_j <u_j, u_j>` without the `dt` factor.
pub(crate) fn snapshot_sq_sum(traj: &Trajectory, grid: &SpatialGrid) -> f64 {
    traj.snaps.iter().map(|s| grid.norm_sq(s)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub trajectories: Vec<Trajectory>,
}

impl Ensemble {
    pub fn new(grid: SpatialGrid, time: TimeGrid, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        let p = trajectories[0].input.len();
        for t in &trajectories {
            t.check(&grid, &time)?;
            if t.input.len() != p {
                return Err(Error::Dimension { expected: p, found: t.input.len() });
            }
        }
        Ok(Self { grid, time, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.trajectories[0].input.len()
    }

    /// Every snapshot of every trajectory in trajectory-major order.
    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.trajectories.iter().flat_map(|t| t.snaps.iter())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.grid.len();
        let j = self.time.len();
        let n = self.len();
        let p = self.input_len();
        let mut buf = Vec::with_capacity(48 + 8 * (2 * m + n * p + n * j * m) + 20 * n + 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        for d in [m, j, n, p] {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.time.dt().to_le_bytes());
        let mut put = |xs: &[f64]| {
            for x in xs {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        };
        put(self.grid.nodes());
        put(self.grid.weights());
        for t in &self.trajectories {
            put(&t.input.strength);
        }
        for s in self.snapshots() {
            put(s);
        }
        for t in &self.trajectories {
            buf.extend_from_slice(&t.input.meta.generator.tag().to_le_bytes());
            buf.extend_from_slice(&t.input.meta.seed.to_le_bytes());
            buf.extend_from_slice(&t.input.meta.param.to_le_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 32 + 8 + 4 {
            return Err(Error::Format(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let m = r.u64()? as usize;
        let j = r.u64()? as usize;
        let n = r.u64()? as usize;
        let p = r.u64()? as usize;
        let expected = 48usize
            .checked_add(8 * (2 * m + n * p + n * j * m))
            .and_then(|x| x.checked_add(20 * n))
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        if expected != body.len() {
            return Err(Error::Format(format!(
                "payload length {} does not match header ({expected})",
                body.len()
            )));
        }
        let dt = r.f64()?;
        let nodes = r.f64s(m)?;
        let weights = r.f64s(m)?;
        let grid = SpatialGrid::from_parts(nodes, weights)?;
        let time = TimeGrid::new(dt, j).map_err(|e| Error::Format(e.to_string()))?;
        let mut inputs = Vec::with_capacity(n);
        for _ in 0..n {
            inputs.push(r.f64s(p)?);
        }
        let mut snaps = Vec::with_capacity(n);
        for _ in 0..n {
            let mut traj = Vec::with_capacity(j);
            for _ in 0..j {
                traj.push(Snapshot(r.f64s(m)?));
            }
            snaps.push(traj);
        }
        let mut trajectories = Vec::with_capacity(n);
        for (strength, snaps) in inputs.into_iter().zip(snaps) {
            let generator = GeneratorKind::from_tag(r.u32()?)?;
            let seed = r.u64()?;
            let param = r.f64()?;
            let input = RandomInput { strength, meta: InputMeta { generator, seed, param } };
            trajectories.push(Trajectory { input, snaps });
        }
        Ensemble::new(grid, time, trajectories)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos + len;
        if end > self.buf.len() {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * count)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn save_ensemble(e: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, e.to_bytes())?;
    Ok(())
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<Ensemble> {
    Ensemble::from_bytes(&fs::read(path)?)
}

/// Writes one trajectory as `t,x,value` rows.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    traj: &Trajectory,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Result<()> {
    traj.check(grid, time)?;
    writeln!(out, "t,x,value")?;
    for (t, snap) in time.instants().zip(&traj.snaps) {
        for (x, v) in grid.nodes().iter().zip(snap.iter()) {
            writeln!(out, "{t},{x},{v}")?;
        }
    }
    Ok(())
}
