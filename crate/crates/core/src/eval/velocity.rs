use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{velocity_series, Axis, TrajectoryBatch};

/// Equal-width histogram normalized to unit area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub densities: Vec<f64>,
    pub width: f64,
}

impl Histogram {
    /// Sum of density times bin width.
    pub fn mass(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityDistribution {
    pub axis: Axis,
    pub samples: usize,
    pub histogram: Histogram,
    /// Least-squares fit of a normal density to the histogram.
    pub fit: GaussianFit,
    pub sample_mean: f64,
    pub sample_std: f64,
}

/// Histogram of `values` over their range. When every value is equal the
/// data lands in one unit-width bin in the middle of the grid.
pub fn density_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 || values.is_empty() {
        return Err(Error::Invariant("histogram needs values and at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("histogram values must be finite".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (start, width) = if hi > lo { (lo, (hi - lo) / bins as f64) } else { (lo - (bins / 2) as f64 - 0.5, 1.0) };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - start) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = values.len() as f64;
    Ok(Histogram {
        centers: (0..bins).map(|k| start + (k as f64 + 0.5) * width).collect(),
        densities: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
        width,
    })
}

fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let u = (x - mean) / std;
    (-0.5 * u * u).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}

/// Levenberg-Marquardt on (mean, ln std) minimizing the squared density
/// residuals.
fn fit_normal(h: &Histogram, mean0: f64, std0: f64) -> GaussianFit {
    let sse = |m: f64, s: f64| -> f64 {
        h.centers
            .iter()
            .zip(&h.densities)
            .map(|(&x, &d)| {
                let r = normal_pdf(x, m, s) - d;
                r * r
            })
            .sum()
    };
    let (mut mean, mut log_std) = (mean0, std0.ln());
    let mut cost = sse(mean, std0);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let std = log_std.exp();
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &d) in h.centers.iter().zip(&h.densities) {
            let p = normal_pdf(x, mean, std);
            let u = (x - mean) / std;
            let (j1, j2) = (p * u / std, p * (u * u - 1.0));
            let r = p - d;
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * r;
            g2 += j2 * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let (b11, b22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = b11 * b22 - a12 * a12;
            if det <= 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let dm = -(b22 * g1 - a12 * g2) / det;
            let ds = -(b11 * g2 - a12 * g1) / det;
            let new_cost = sse(mean + dm, (log_std + ds).exp());
            if new_cost < cost {
                mean += dm;
                log_std += ds;
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    GaussianFit { mean, std: log_std.exp() }
}

/// Pools forward-difference velocities of every trajectory along `axis`,
/// histograms them and fits a normal density to the histogram.
pub fn velocity_distribution(batch: &TrajectoryBatch, axis: Axis, bins: usize) -> Result<VelocityDistribution> {
    if bins < 4 {
        return Err(Error::Invariant(format!("need at least 4 bins, got {bins}")));
    }
    let v: Vec<f64> = batch.iter().flat_map(|t| velocity_series(t, axis)).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if !(std > 0.0) {
        return Err(Error::Domain(format!("all {axis} velocities are equal; no distribution to fit")));
    }
    let histogram = density_histogram(&v, bins)?;
    let fit = fit_normal(&histogram, mean, std);
    Ok(VelocityDistribution { axis, samples: v.len(), histogram, fit, sample_mean: mean, sample_std: std })
}
