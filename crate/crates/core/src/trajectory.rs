//! Cylindrical-coordinate trajectories, CSV I/O and preprocessing.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::BatchTensor;

/// Frame interval of the reference tracking setup (210 frames per second), seconds.
pub const DEFAULT_T0: f64 = 0.00476;

pub const CSV_HEADER: [&str; 5] = ["traj_id", "t_index", "r", "theta", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    R,
    Theta,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::R, Axis::Theta, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::R => 0,
            Axis::Theta => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::R => "r",
            Axis::Theta => "theta",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One particle's path: radius (mm), unwrapped azimuth (rad) and height (mm)
/// sampled every `t0` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    r: Vec<f64>,
    theta: Vec<f64>,
    z: Vec<f64>,
    t0: f64,
}

impl Trajectory {
    /// Builds a trajectory, rejecting anything that breaks the invariants:
    /// equal lengths n >= 2, finite values, r >= 0, |dtheta| < pi, t0 > 0.
    pub fn new(r: Vec<f64>, theta: Vec<f64>, z: Vec<f64>, t0: f64) -> Result<Self> {
        let n = r.len();
        if theta.len() != n || z.len() != n {
            return Err(Error::Invariant(format!(
                "series lengths differ: r={}, theta={}, z={}",
                n,
                theta.len(),
                z.len()
            )));
        }
        if n < 2 {
            return Err(Error::Invariant(format!("trajectory needs at least 2 steps, got {n}")));
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::Invariant(format!("t0 must be positive, got {t0}")));
        }
        for (name, s) in [("r", &r), ("theta", &theta), ("z", &z)] {
            if let Some(i) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!("non-finite {name} at step {i}")));
            }
        }
        if let Some(i) = r.iter().position(|&v| v < 0.0) {
            return Err(Error::Invariant(format!("negative radius {} at step {i}", r[i])));
        }
        if let Some(i) = theta.windows(2).position(|w| (w[1] - w[0]).abs() >= PI) {
            return Err(Error::Invariant(format!("theta jumps by >= pi between steps {i} and {}", i + 1)));
        }
        Ok(Self { r, theta, z, t0 })
    }

    /// Like [`Trajectory::new`] but unwraps `theta` first.
    pub fn from_wrapped(r: Vec<f64>, mut theta: Vec<f64>, z: Vec<f64>, t0: f64) -> Result<Self> {
        unwrap_angles(&mut theta);
        Self::new(r, theta, z, t0)
    }

    /// Converts Cartesian samples and unwraps the resulting azimuth.
    pub fn from_cartesian(points: &[(f64, f64, f64)], t0: f64) -> Result<Self> {
        let (mut r, mut theta, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for &(x, y, zz) in points {
            let (rr, th, zc) = cartesian_to_cylindrical(x, y, zz);
            r.push(rr);
            theta.push(th);
            z.push(zc);
        }
        Self::from_wrapped(r, theta, z, t0)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Total duration n * t0.
    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.t0
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn series(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::R => &self.r,
            Axis::Theta => &self.theta,
            Axis::Z => &self.z,
        }
    }

    /// Cartesian (x, y, z) point at step `t`.
    pub fn cartesian_at(&self, t: usize) -> (f64, f64, f64) {
        let (x, y) = (self.r[t] * self.theta[t].cos(), self.r[t] * self.theta[t].sin());
        (x, y, self.z[t])
    }

    fn truncated(&self, len: usize) -> Self {
        Self { r: self.r[..len].to_vec(), theta: self.theta[..len].to_vec(), z: self.z[..len].to_vec(), t0: self.t0 }
    }
}

/// `m >= 1` trajectories of equal length and timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    trajectories: Vec<Trajectory>,
}

impl TrajectoryBatch {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first =
            trajectories.first().ok_or_else(|| Error::Invariant("batch must hold at least one trajectory".into()))?;
        let (n, t0) = (first.len(), first.t0);
        for (i, t) in trajectories.iter().enumerate() {
            if t.len() != n {
                return Err(Error::RaggedBatch { traj: i, len: t.len(), expected: n });
            }
            if t.t0 != t0 {
                return Err(Error::Invariant(format!("trajectory {i} has t0 = {}, expected {t0}", t.t0)));
            }
        }
        Ok(Self { trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Steps per trajectory.
    pub fn steps(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn t0(&self) -> f64 {
        self.trajectories[0].t0
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    /// Batch reordered so that position `k` holds trajectory `order[k]`;
    /// `order` must use every index exactly once.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &i in order {
            if i < seen.len() && std::mem::replace(&mut seen[i], true) {
                return Err(Error::Invariant(format!("index {i} repeated in permutation")));
            }
        }
        if order.len() != self.len() {
            return Err(Error::Invariant(format!(
                "permutation has {} entries for {} trajectories",
                order.len(),
                self.len()
            )));
        }
        let trajs = order
            .iter()
            .map(|&i| self.trajectories.get(i).cloned().ok_or(Error::Range { requested: i, available: self.len() }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(trajs)
    }

    /// Packs the batch into an `m x 3 x n` tensor (channels r, theta, z).
    pub fn to_tensor(&self) -> BatchTensor {
        let (m, n) = (self.len(), self.steps());
        let mut out = BatchTensor::zeros(m, 3, n);
        for (i, t) in self.trajectories.iter().enumerate() {
            for axis in Axis::ALL {
                out.row_mut(i, axis.index()).copy_from_slice(t.series(axis));
            }
        }
        out
    }
}

/// Removes 2*pi jumps so consecutive samples differ by at most pi.
pub fn unwrap_angles(theta: &mut [f64]) {
    let mut offset = 0.0;
    for i in 1..theta.len() {
        let d = theta[i] + offset - theta[i - 1];
        if d.abs() > PI {
            offset -= TAU * (d / TAU).round();
        }
        theta[i] += offset;
    }
}

/// theta = atan2(y, x) in (-pi, pi]; the origin maps to theta = 0.
pub fn cartesian_to_cylindrical(x: f64, y: f64, z: f64) -> (f64, f64, f64) {
    let r = x.hypot(y);
    let theta = if r == 0.0 { 0.0 } else { y.atan2(x) };
    // atan2 returns -pi for (negative x, -0.0); fold onto the closed end.
    let theta = if theta == -PI { PI } else { theta };
    (r, theta, z)
}

pub fn cylindrical_to_cartesian(r: f64, theta: f64, z: f64) -> Result<(f64, f64, f64)> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius must be non-negative, got {r}")));
    }
    Ok((r * theta.cos(), r * theta.sin(), z))
}

/// Keeps the first `length` steps of every trajectory.
pub fn window(batch: &TrajectoryBatch, length: usize) -> Result<TrajectoryBatch> {
    if length > batch.steps() {
        return Err(Error::Range { requested: length, available: batch.steps() });
    }
    if length < 2 {
        return Err(Error::Invariant(format!("window length must be >= 2, got {length}")));
    }
    TrajectoryBatch::new(batch.iter().map(|t| t.truncated(length)).collect())
}

/// Per-axis affine map used to z-score a batch, plus the data timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Indexed r, theta, z.
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub t0: f64,
}

impl NormStats {
    pub fn identity(t0: f64) -> Self {
        Self { mean: [0.0; 3], std: [1.0; 3], t0 }
    }
}

/// Z-scores each axis over all trajectories and steps of the batch.
pub fn normalize(batch: &TrajectoryBatch) -> Result<(BatchTensor, NormStats)> {
    let mut tensor = batch.to_tensor();
    let mut stats = NormStats::identity(batch.t0());
    let count = (batch.len() * batch.steps()) as f64;
    for axis in Axis::ALL {
        let c = axis.index();
        let values = || batch.iter().flat_map(|t| t.series(axis).iter().copied());
        let mean = values().sum::<f64>() / count;
        let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        let std = var.sqrt();
        if std == 0.0 || std <= 1e-12 * mean.abs() {
            return Err(Error::DegenerateAxis(axis));
        }
        stats.mean[c] = mean;
        stats.std[c] = std;
        for i in 0..tensor.batch() {
            for v in tensor.row_mut(i, c) {
                *v = (*v - mean) / std;
            }
        }
    }
    Ok((tensor, stats))
}

/// Inverse of [`normalize`]. The radius is reflected through zero (|r|) and
/// theta is unwrapped, so decoder outputs always yield valid trajectories.
pub fn denormalize(tensor: &BatchTensor, stats: &NormStats) -> Result<TrajectoryBatch> {
    if tensor.channels() != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {}", tensor.channels())));
    }
    let mut trajs = Vec::with_capacity(tensor.batch());
    for i in 0..tensor.batch() {
        let axis_series =
            |c: usize| -> Vec<f64> { tensor.row(i, c).iter().map(|v| v * stats.std[c] + stats.mean[c]).collect() };
        let r = axis_series(0).into_iter().map(f64::abs).collect();
        trajs.push(Trajectory::from_wrapped(r, axis_series(1), axis_series(2), stats.t0)?);
    }
    TrajectoryBatch::new(trajs)
}

/// Forward-difference velocity (s(t + t0) - s(t)) / t0, length n - 1.
pub fn velocity_series(traj: &Trajectory, axis: Axis) -> Vec<f64> {
    let t0 = traj.t0();
    traj.series(axis).windows(2).map(|w| (w[1] - w[0]) / t0).collect()
}

pub fn load_batch(path: impl AsRef<Path>) -> Result<TrajectoryBatch> {
    load_batch_with_t0(path, DEFAULT_T0)
}

/// Reads the `traj_id,t_index,r,theta,z` CSV. The file carries no timestep,
/// so the caller supplies it.
pub fn load_batch_with_t0(path: impl AsRef<Path>, t0: f64) -> Result<TrajectoryBatch> {
    let file = File::open(path.as_ref())?;
    read_batch(file, t0)
}

pub fn read_batch<R: std::io::Read>(reader: R, t0: f64) -> Result<TrajectoryBatch> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != CSV_HEADER {
        return Err(Error::Schema(format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), got.join(","))));
    }

    struct Pending {
        id: i64,
        r: Vec<f64>,
        theta: Vec<f64>,
        z: Vec<f64>,
    }
    let mut groups: Vec<Pending> = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let line = row_no + 2;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::Schema(format!("line {line}: {e}")),
            _ => Error::Parse { line, msg: e.to_string() },
        })?;
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Schema(format!(
                "line {line}: expected {} fields, found {}",
                CSV_HEADER.len(),
                record.len()
            )));
        }
        let int = |k: usize| -> Result<i64> {
            record[k].trim().parse::<i64>().map_err(|e| Error::Parse { line, msg: format!("{}: {e}", CSV_HEADER[k]) })
        };
        let real = |k: usize| -> Result<f64> {
            let v = record[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse { line, msg: format!("{}: {e}", CSV_HEADER[k]) })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: format!("{} is not finite", CSV_HEADER[k]) });
            }
            Ok(v)
        };
        let (id, t_index) = (int(0)?, int(1)?);
        let fresh = match groups.last() {
            Some(g) if g.id == id => false,
            Some(g) if g.id > id => return Err(Error::Schema(format!("line {line}: traj_id {id} after {}", g.id))),
            _ => true,
        };
        if fresh {
            groups.push(Pending { id, r: Vec::new(), theta: Vec::new(), z: Vec::new() });
        }
        let g = groups.last_mut().expect("group pushed above");
        if t_index != g.r.len() as i64 {
            return Err(Error::Schema(format!(
                "line {line}: traj_id {id} expected t_index {}, found {t_index}",
                g.r.len()
            )));
        }
        g.r.push(real(2)?);
        g.theta.push(real(3)?);
        g.z.push(real(4)?);
    }

    if let Some(first) = groups.first() {
        let expected = first.r.len();
        if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.r.len() != expected) {
            return Err(Error::RaggedBatch { traj: i, len: g.r.len(), expected });
        }
    }
    let trajs =
        groups.into_iter().map(|g| Trajectory::from_wrapped(g.r, g.theta, g.z, t0)).collect::<Result<Vec<_>>>()?;
    TrajectoryBatch::new(trajs)
}

pub fn save_batch(batch: &TrajectoryBatch, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_batch(batch, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Values are written in shortest round-trip form, so reading them back is exact.
pub fn write_batch<W: Write>(batch: &TrajectoryBatch, out: &mut W) -> Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for (id, t) in batch.iter().enumerate() {
        for k in 0..t.len() {
            writeln!(out, "{id},{k},{:?},{:?},{:?}", t.r[k], t.theta[k], t.z[k])?;
        }
    }
    Ok(())
}
