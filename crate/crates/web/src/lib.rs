//! Browser bindings. Each export takes plain numbers or a JSON string and
//! returns a JSON document for the page to draw.

use lagvae::eval::{
    correlation_matrix, fit_exponent, last_decade_window, msd_batch, score_model, short_time_window, EvalAxis, MsdCurve,
};
use lagvae::nn::ArchSpec;
use lagvae::rng::seeded;
use lagvae::surrogate::{generate, SurrogateParams};
use lagvae::trainer::{sample_model, train, TrainConfig};
use lagvae::trajectory::{window, Axis, TrajectoryBatch};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Steps per trajectory in the training demo.
pub const DEMO_LENGTH: usize = 64;
/// Longest series the page asks for; keeps the MSD pass interactive.
pub const MAX_STEPS: usize = 4096;

type Out = Result<String, String>;

fn js(r: Out) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct Curve {
    axis: EvalAxis,
    delta_t: Vec<f64>,
    msd: Vec<f64>,
    gamma_short: Option<f64>,
    gamma_long: Option<f64>,
}

/// Thins a curve to about `points` log-spaced lags.
fn thin(curve: &MsdCurve, points: usize) -> Curve {
    let n = curve.len();
    let mut idx: Vec<usize> = (0..points)
        .map(|i| ((n as f64).powf(i as f64 / (points - 1) as f64) - 1.0).round() as usize)
        .filter(|&i| i < n)
        .collect();
    idx.dedup();
    Curve {
        axis: curve.axis,
        delta_t: idx.iter().map(|&i| curve.delta_t[i]).collect(),
        msd: idx.iter().map(|&i| curve.msd[i]).collect(),
        gamma_short: fit_exponent(curve, short_time_window(curve)).ok(),
        gamma_long: fit_exponent(curve, last_decade_window(curve)).ok(),
    }
}

fn curves(batch: &TrajectoryBatch) -> Result<Vec<Curve>, String> {
    EvalAxis::ALL.iter().map(|&a| msd_batch(batch, a).map(|c| thin(&c, 80)).map_err(err)).collect()
}

fn series(batch: &TrajectoryBatch, count: usize) -> serde_json::Value {
    let pick: Vec<_> = batch.iter().take(count).collect();
    json!({
        "r": pick.iter().map(|t| t.series(Axis::R)).collect::<Vec<_>>(),
        "theta": pick.iter().map(|t| t.series(Axis::Theta)).collect::<Vec<_>>(),
        "z": pick.iter().map(|t| t.series(Axis::Z)).collect::<Vec<_>>(),
    })
}

fn parse_params(params_json: &str) -> Result<SurrogateParams, String> {
    let p: SurrogateParams = serde_json::from_str(params_json).map_err(err)?;
    if p.n > MAX_STEPS {
        return Err(format!("n = {} exceeds the demo limit of {MAX_STEPS}", p.n));
    }
    Ok(p)
}

/// Surrogate batch from a (partial) parameter object: MSD curves with
/// fitted exponents and the first three trajectories.
pub fn surrogate_json(params_json: &str) -> Out {
    let p = parse_params(params_json)?;
    let batch = generate(&p).map_err(err)?;
    let doc = json!({ "curves": curves(&batch)?, "series": series(&batch, 3) });
    serde_json::to_string(&doc).map_err(err)
}

/// Scores a fresh-seed redraw against the batch `params_json` describes;
/// returns the four correlation matrices and the score card.
pub fn redraw_json(params_json: &str, redraw_seed: u64) -> Out {
    let p = parse_params(params_json)?;
    let truth = generate(&p).map_err(err)?;
    let redraw = generate(&SurrogateParams { seed: redraw_seed, ..p }).map_err(err)?;
    let matrices = EvalAxis::ALL
        .iter()
        .map(|&a| correlation_matrix(&truth, &redraw, a).map_err(err))
        .collect::<Result<Vec<_>, _>>()?;
    let card = score_model(&truth, &redraw, None).map_err(err)?;
    serde_json::to_string(&json!({ "matrices": matrices, "score": card })).map_err(err)
}

/// Trains the default layer stack on `DEMO_LENGTH`-step windows of the
/// default surrogate, then samples as many trajectories as it trained on.
pub fn train_json(w: f64, iterations: usize, learning_rate: f64, seed: u64) -> Out {
    let params = SurrogateParams { n: DEMO_LENGTH, seed, ..SurrogateParams::default() };
    let truth = generate(&params).map_err(err)?;
    let config = TrainConfig {
        w,
        iterations,
        learning_rate,
        seed,
        arch: ArchSpec { input_length: DEMO_LENGTH, ..ArchSpec::default() },
        ..TrainConfig::default()
    };
    let report = train(&truth, &config).map_err(err)?;
    let generated =
        sample_model(&report.final_params, &report.norm, truth.len(), &mut seeded(seed ^ 0x5A5A)).map_err(err)?;
    let card = score_model(&truth, &generated, Some(w)).map_err(err)?;
    let truth = window(&truth, DEMO_LENGTH).map_err(err)?;
    let doc = json!({
        "history": report.history,
        "truth": series(&truth, 3),
        "generated": series(&generated, 3),
        "score": card,
    });
    serde_json::to_string(&doc).map_err(err)
}

#[wasm_bindgen(js_name = surrogate)]
pub fn surrogate_js(params_json: &str) -> Result<String, JsValue> {
    js(surrogate_json(params_json))
}

#[wasm_bindgen(js_name = redraw)]
pub fn redraw_js(params_json: &str, redraw_seed: u32) -> Result<String, JsValue> {
    js(redraw_json(params_json, redraw_seed as u64))
}

#[wasm_bindgen(js_name = trainDemo)]
pub fn train_js(w: f64, iterations: u32, learning_rate: f64, seed: u32) -> Result<String, JsValue> {
    js(train_json(w, iterations as usize, learning_rate, seed as u64))
}
