use serde::{Deserialize, Serialize};

use super::correlation::{correlation_matrix, generalization_factor, CorrelationMatrix};
use super::msd::{fit_exponent, last_decade_window, msd_batch, short_time_window, MsdCurve};
use super::EvalAxis;
use crate::error::{Error, Result};
use crate::trajectory::{window, TrajectoryBatch};

/// Grid points whose truth log-MSD is closer to zero than this are skipped:
/// the relative log error divides by it.
pub const SINGULAR_LOG_MSD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyScore {
    /// `1 - mean_eta`.
    pub accuracy: f64,
    pub mean_eta: f64,
    pub points_used: usize,
    pub skipped_points: usize,
}

/// Mean relative log-MSD error over lags in `[t0, tn - t0]`, turned into a
/// score `1 - <eta>`.
pub fn accuracy_factor(truth: &MsdCurve, generated: &MsdCurve, t0: f64, tn: f64) -> Result<AccuracyScore> {
    if truth.delta_t.len() != generated.delta_t.len()
        || truth.delta_t.iter().zip(&generated.delta_t).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(t0))
    {
        return Err(Error::Shape("MSD curves are on different lag grids".into()));
    }
    let tol = 1e-9 * t0;
    let (lo, hi) = (t0 - tol, tn - t0 + tol);
    let mut sum = 0.0;
    let (mut used, mut skipped) = (0usize, 0usize);
    for ((&dt, &ms), &mg) in truth.delta_t.iter().zip(&truth.msd).zip(&generated.msd) {
        if dt < lo || dt > hi {
            continue;
        }
        if !(ms > 0.0) || !(mg > 0.0) {
            return Err(Error::Domain(format!(
                "MSD must be positive for the log score (truth {ms}, generated {mg} at delta_t = {dt})"
            )));
        }
        let ls = ms.log10();
        if ls.abs() < SINGULAR_LOG_MSD {
            skipped += 1;
            continue;
        }
        sum += ((ls - mg.log10()) / ls).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Invariant("no usable lag in the accuracy window".into()));
    }
    let mean_eta = sum / used as f64;
    Ok(AccuracyScore { accuracy: 1.0 - mean_eta, mean_eta, points_used: used, skipped_points: skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisScore {
    pub axis: EvalAxis,
    pub accuracy: f64,
    pub mean_eta: f64,
    pub points_used: usize,
    pub skipped_points: usize,
    pub generalization: f64,
    /// Mean over generated trajectories of the best truth correlation.
    pub mean_max_zeta: f64,
    pub gamma_short_truth: Option<f64>,
    pub gamma_short_generated: Option<f64>,
    pub gamma_long_truth: Option<f64>,
    pub gamma_long_generated: Option<f64>,
}

/// Accuracy and generalization of one generated batch against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub w: Option<f64>,
    pub checkpoint: Option<String>,
    pub steps: usize,
    pub t0: f64,
    pub truth_count: usize,
    pub generated_count: usize,
    /// Lag window of the accuracy mean, seconds.
    pub accuracy_window: (f64, f64),
    pub short_fit_window: (f64, f64),
    pub long_fit_window: (f64, f64),
    pub axes: Vec<AxisScore>,
}

impl ScoreCard {
    pub fn axis(&self, axis: EvalAxis) -> &AxisScore {
        self.axes.iter().find(|a| a.axis == axis).expect("every axis is scored")
    }
}

/// Scores r, theta, z and 3-d. Both batches are cut to the shorter length
/// first; they must share t0.
pub fn score_model(truth: &TrajectoryBatch, generated: &TrajectoryBatch, w: Option<f64>) -> Result<ScoreCard> {
    if (truth.t0() - generated.t0()).abs() > 1e-12 * truth.t0() {
        return Err(Error::Invariant(format!(
            "timesteps differ: truth {} vs generated {}",
            truth.t0(),
            generated.t0()
        )));
    }
    let n = truth.steps().min(generated.steps());
    if n < 3 {
        return Err(Error::Invariant(format!("need at least 3 common steps, have {n}")));
    }
    let truth = window(truth, n)?;
    let generated = window(generated, n)?;
    let t0 = truth.t0();
    let tn = n as f64 * t0;

    let mut component_matrices: Vec<CorrelationMatrix> = Vec::new();
    let mut axes = Vec::new();
    let mut windows = None;
    for axis in EvalAxis::ALL {
        let ms = msd_batch(&truth, axis)?;
        let mg = msd_batch(&generated, axis)?;
        let acc = accuracy_factor(&ms, &mg, t0, tn)?;
        let matrix = match axis.component() {
            Some(_) => {
                let m = correlation_matrix(&truth, &generated, axis)?;
                component_matrices.push(m.clone());
                m
            }
            None => super::correlation::mean_matrix(&component_matrices)?,
        };
        let generalization = generalization_factor(&matrix);
        let (short, long) = (short_time_window(&ms), last_decade_window(&ms));
        windows = Some((short, long));
        axes.push(AxisScore {
            axis,
            accuracy: acc.accuracy,
            mean_eta: acc.mean_eta,
            points_used: acc.points_used,
            skipped_points: acc.skipped_points,
            generalization,
            mean_max_zeta: 1.0 - generalization,
            gamma_short_truth: fit_exponent(&ms, short).ok(),
            gamma_short_generated: fit_exponent(&mg, short).ok(),
            gamma_long_truth: fit_exponent(&ms, long).ok(),
            gamma_long_generated: fit_exponent(&mg, long).ok(),
        });
    }
    let (short_fit_window, long_fit_window) = windows.expect("four axes scored");
    Ok(ScoreCard {
        w,
        checkpoint: None,
        steps: n,
        t0,
        truth_count: truth.len(),
        generated_count: generated.len(),
        accuracy_window: (t0, tn - t0),
        short_fit_window,
        long_fit_window,
        axes,
    })
}
