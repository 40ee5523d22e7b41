use serde::{Deserialize, Serialize};

use super::EvalAxis;
use crate::error::{Error, Result};
use crate::trajectory::{Trajectory, TrajectoryBatch};

/// Mean squared displacement against lag time `k * t0`, `k = 1 ..= n - 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdCurve {
    pub axis: EvalAxis,
    pub t0: f64,
    pub delta_t: Vec<f64>,
    pub msd: Vec<f64>,
}

impl MsdCurve {
    pub fn len(&self) -> usize {
        self.msd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msd.is_empty()
    }
}

/// Time-averaged MSD of one trajectory: for each lag the plain mean of the
/// `n - k` squared lag-`k` displacements. The 3-d variant uses Euclidean
/// displacement between Cartesian positions.
pub fn msd_single(traj: &Trajectory, axis: EvalAxis) -> Result<MsdCurve> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::Invariant(format!("MSD needs at least 3 steps, got {n}")));
    }
    let t0 = traj.t0();
    let max_lag = n - 2;
    let mut msd = Vec::with_capacity(max_lag);
    match axis.component() {
        Some(a) => {
            let s = traj.series(a);
            for k in 1..=max_lag {
                let sum: f64 = s[k..].iter().zip(s).map(|(b, a)| (b - a) * (b - a)).sum();
                msd.push(sum / (n - k) as f64);
            }
        }
        None => {
            let pts: Vec<(f64, f64, f64)> = (0..n).map(|t| traj.cartesian_at(t)).collect();
            for k in 1..=max_lag {
                let sum: f64 = pts[k..]
                    .iter()
                    .zip(&pts)
                    .map(|(b, a)| {
                        let (dx, dy, dz) = (b.0 - a.0, b.1 - a.1, b.2 - a.2);
                        dx * dx + dy * dy + dz * dz
                    })
                    .sum();
                msd.push(sum / (n - k) as f64);
            }
        }
    }
    let delta_t = (1..=max_lag).map(|k| k as f64 * t0).collect();
    Ok(MsdCurve { axis, t0, delta_t, msd })
}

/// Mean of the per-trajectory curves at each lag.
pub fn msd_batch(batch: &TrajectoryBatch, axis: EvalAxis) -> Result<MsdCurve> {
    let mut iter = batch.iter();
    let mut acc = msd_single(iter.next().expect("batches are non-empty"), axis)?;
    for t in iter {
        let c = msd_single(t, axis)?;
        for (a, b) in acc.msd.iter_mut().zip(c.msd) {
            *a += b;
        }
    }
    let m = batch.len() as f64;
    for a in acc.msd.iter_mut() {
        *a /= m;
    }
    Ok(acc)
}

/// Least-squares slope of log10(msd) against log10(delta_t) over the points
/// with `lo <= delta_t <= hi`.
pub fn fit_exponent(curve: &MsdCurve, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    let tol = 1e-9 * curve.t0;
    let pts: Vec<(f64, f64)> = curve
        .delta_t
        .iter()
        .zip(&curve.msd)
        .filter(|(dt, _)| **dt >= lo - tol && **dt <= hi + tol)
        .map(|(&dt, &v)| (dt, v))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Invariant(format!("exponent fit needs >= 3 points in [{lo}, {hi}], found {}", pts.len())));
    }
    if let Some((dt, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Domain(format!("MSD {v} at delta_t = {dt} is not positive")));
    }
    let xs: Vec<f64> = pts.iter().map(|(dt, _)| dt.log10()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.log10()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// First five lags.
pub fn short_time_window(curve: &MsdCurve) -> (f64, f64) {
    let last = curve.delta_t.len().min(5).saturating_sub(1);
    (curve.delta_t[0], curve.delta_t[last])
}

/// The last decade of lag times, `[max / 10, max]`.
pub fn last_decade_window(curve: &MsdCurve) -> (f64, f64) {
    let max = *curve.delta_t.last().expect("curves are non-empty");
    (max / 10.0, max)
}
