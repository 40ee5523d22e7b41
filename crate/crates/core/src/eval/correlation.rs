use serde::{Deserialize, Serialize};

use super::EvalAxis;
use crate::error::{Error, Result};
use crate::trajectory::{window, TrajectoryBatch};

/// Pearson coefficients, row `i` = truth trajectory, column `j` = generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub axis: EvalAxis,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

fn centered_moments(a: &[f64]) -> (Vec<f64>, f64) {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let centered: Vec<f64> = a.iter().map(|v| v - mean).collect();
    let var = centered.iter().map(|v| v * v).sum::<f64>() / n;
    (centered, var)
}

fn pearson_centered(a: &[f64], var_a: f64, b: &[f64], var_b: f64) -> f64 {
    let n = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
    (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0)
}

/// Population Pearson correlation, clamped to [-1, 1].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape(format!("pearson needs equal lengths >= 2, got {} and {}", a.len(), b.len())));
    }
    let (ca, va) = centered_moments(a);
    let (cb, vb) = centered_moments(b);
    if !(va > 0.0) || !(vb > 0.0) {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok(pearson_centered(&ca, va, &cb, vb))
}

fn centered_rows(batch: &TrajectoryBatch, axis: crate::trajectory::Axis) -> Result<Vec<(Vec<f64>, f64)>> {
    batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (c, v) = centered_moments(t.series(axis));
            if v > 0.0 {
                Ok((c, v))
            } else {
                Err(Error::UndefinedCorrelation(format!("trajectory {i} is constant along {axis}")))
            }
        })
        .collect()
}

/// Entry (i, j) is the correlation of truth `i` with generated `j` along a
/// cylindrical axis. Both batches are cut to the shorter length. The 3-d
/// matrix is the mean of the three component matrices.
pub fn correlation_matrix(
    truth: &TrajectoryBatch,
    generated: &TrajectoryBatch,
    axis: EvalAxis,
) -> Result<CorrelationMatrix> {
    let Some(component) = axis.component() else {
        let parts = [EvalAxis::R, EvalAxis::Theta, EvalAxis::Z]
            .into_iter()
            .map(|a| correlation_matrix(truth, generated, a))
            .collect::<Result<Vec<_>>>()?;
        return mean_matrix(&parts);
    };
    let len = truth.steps().min(generated.steps());
    let truth = window(truth, len)?;
    let generated = window(generated, len)?;
    let rows = centered_rows(&truth, component)?;
    let cols = centered_rows(&generated, component)?;
    let mut values = Vec::with_capacity(rows.len() * cols.len());
    for (a, va) in &rows {
        for (b, vb) in &cols {
            values.push(pearson_centered(a, *va, b, *vb));
        }
    }
    Ok(CorrelationMatrix { axis, rows: rows.len(), cols: cols.len(), values })
}

/// Correlations of a batch with itself.
pub fn self_correlation(batch: &TrajectoryBatch, axis: EvalAxis) -> Result<CorrelationMatrix> {
    correlation_matrix(batch, batch, axis)
}

/// Element-wise arithmetic mean; tagged as the 3-d matrix.
pub fn mean_matrix(parts: &[CorrelationMatrix]) -> Result<CorrelationMatrix> {
    let first = parts.first().ok_or_else(|| Error::Shape("no matrices to average".into()))?;
    if parts.iter().any(|p| p.rows != first.rows || p.cols != first.cols) {
        return Err(Error::Shape("correlation matrices differ in shape".into()));
    }
    let k = parts.len() as f64;
    let values = (0..first.values.len()).map(|e| parts.iter().map(|p| p.values[e]).sum::<f64>() / k).collect();
    Ok(CorrelationMatrix { axis: EvalAxis::ThreeD, rows: first.rows, cols: first.cols, values })
}

/// `1 - (1/m) sum_j max_i zeta(i, j)`.
pub fn generalization_factor(matrix: &CorrelationMatrix) -> f64 {
    let mean_max = (0..matrix.cols)
        .map(|j| (0..matrix.rows).map(|i| matrix.get(i, j)).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / matrix.cols as f64;
    1.0 - mean_max
}
