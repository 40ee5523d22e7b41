//! Training objective: reconstruction term, Gaussian-prior divergence term,
//! and their weighted sum, each with exact partial derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::BatchTensor;

/// How the log-scale term of the latent divergence is written.
///
/// `Printed` uses `mu^2 + sigma^2 - 1 - log(sigma)`; `Standard` uses
/// `- log(sigma^2)`, which makes the term the usual Gaussian KL divergence
/// (non-negative, minimized at sigma = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlForm {
    #[default]
    Printed,
    Standard,
}

impl KlForm {
    /// Coefficient of logvar in the per-element term.
    fn logvar_coeff(self) -> f64 {
        match self {
            // log(sigma) = logvar / 2
            KlForm::Printed => 0.5,
            // log(sigma^2) = logvar
            KlForm::Standard => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub j_total: f64,
    pub j_a: f64,
    pub j_g: f64,
    pub w: f64,
}

/// Reconstruction term with its gradient w.r.t. `outputs`.
///
/// `(t1 / (m * tn)) * sum_i sum_t |s_i(t) - s_hat_i(t)|^2` with the squared
/// Euclidean norm over channels and `t1 = t0`, so for `tn = L * t0` this is
/// the per-(trajectory, step) mean of squared distances.
pub fn accuracy_loss(inputs: &BatchTensor, outputs: &BatchTensor, t0: f64, tn: f64) -> Result<(f64, BatchTensor)> {
    if inputs.shape() != outputs.shape() {
        return Err(Error::Shape(format!("inputs {:?} vs outputs {:?}", inputs.shape(), outputs.shape())));
    }
    if !(t0 > 0.0 && tn > 0.0) {
        return Err(Error::Parameter(format!("t0 = {t0} and tn = {tn} must be positive")));
    }
    let m = inputs.batch() as f64;
    let scale = t0 / (m * tn);
    let mut grad = BatchTensor::zeros(inputs.batch(), inputs.channels(), inputs.len());
    let mut sum = 0.0;
    for ((g, s), s_hat) in grad.data_mut().iter_mut().zip(inputs.data()).zip(outputs.data()) {
        let diff = s_hat - s;
        sum += diff * diff;
        *g = 2.0 * scale * diff;
    }
    Ok((scale * sum, grad))
}

/// Convenience form of [`accuracy_loss`] for a window of `L` frames
/// (`tn = L * t0`), where the prefactor reduces to `1 / (m * L)`.
pub fn accuracy_loss_frames(inputs: &BatchTensor, outputs: &BatchTensor) -> Result<(f64, BatchTensor)> {
    accuracy_loss(inputs, outputs, 1.0, inputs.len() as f64)
}

pub struct GeneralizationLoss {
    pub value: f64,
    pub grad_mu: Vec<f64>,
    pub grad_logvar: Vec<f64>,
}

/// `(1 / 2m) sum_i sum_k [mu^2 + sigma^2 - 1 - log(sigma)]` over a batch of
/// `m` codes with `sigma = exp(logvar / 2)`; see [`KlForm`] for the log term.
pub fn generalization_loss(mu: &[f64], logvar: &[f64], batch: usize, form: KlForm) -> Result<GeneralizationLoss> {
    if mu.len() != logvar.len() || batch == 0 || mu.len() % batch != 0 {
        return Err(Error::Shape(format!("mu ({}) and logvar ({}) must be {batch} x d", mu.len(), logvar.len())));
    }
    if mu.iter().chain(logvar).any(|v| !v.is_finite()) {
        return Err(Error::Domain("latent statistics contain non-finite values".into()));
    }
    let scale = 1.0 / (2.0 * batch as f64);
    let c = form.logvar_coeff();
    let mut value = 0.0;
    let mut grad_mu = Vec::with_capacity(mu.len());
    let mut grad_logvar = Vec::with_capacity(mu.len());
    for (&m, &lv) in mu.iter().zip(logvar) {
        let var = lv.exp();
        value += m * m + var - 1.0 - c * lv;
        grad_mu.push(scale * 2.0 * m);
        grad_logvar.push(scale * (var - c));
    }
    Ok(GeneralizationLoss { value: scale * value, grad_mu, grad_logvar })
}

/// `j_a + w * j_g` for a weight strictly inside (0, 1).
pub fn total_objective(j_a: f64, j_g: f64, w: f64) -> Result<ObjectiveValue> {
    check_weight(w)?;
    Ok(ObjectiveValue { j_total: j_a + w * j_g, j_a, j_g, w })
}

pub fn check_weight(w: f64) -> Result<()> {
    if w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("w must lie in (0, 1), got {w}")))
    }
}
