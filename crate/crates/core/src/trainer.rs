//! Minibatch SGD training, sampling from a trained model, finite-difference
//! gradient audits and JSON checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{score_model, ScoreCard};
use crate::nn::{backward, decode, forward, init_params, ArchSpec, BatchTensor, Gradients, Tensor, VaeParams};
use crate::objective::{
    accuracy_loss_frames, check_weight, generalization_loss, total_objective, KlForm, ObjectiveValue,
};
use crate::rng::{derive_seed, gaussian, seeded};
use crate::trajectory::{denormalize, normalize, window, NormStats, TrajectoryBatch};

/// Sub-seed counters under [`TrainConfig::seed`].
const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const AUDIT_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;

/// Trajectories in the audit minibatch.
pub const AUDIT_BATCH: usize = 2;
/// Finite-difference step of the gradient audit.
pub const AUDIT_STEP: f64 = 1e-5;
/// Denominator floor of the audit's relative error; gradients smaller than
/// this are compared in absolute terms.
pub const AUDIT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the latent divergence term, in (0, 1).
    pub w: f64,
    /// Passes over the batch.
    pub iterations: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub arch: ArchSpec,
    pub gradient_audit: bool,
    pub kl_form: KlForm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            w: 1e-4,
            iterations: 300,
            minibatch_size: 5,
            learning_rate: 1e-3,
            seed: 0,
            arch: ArchSpec::default(),
            gradient_audit: false,
            kl_form: KlForm::Printed,
        }
    }
}

impl TrainConfig {
    /// Checks the invariants against a batch of `m` trajectories.
    pub fn validate(&self, m: usize) -> Result<()> {
        check_weight(self.w)?;
        if self.iterations < 1 {
            return Err(Error::Parameter("iterations must be >= 1".into()));
        }
        if self.minibatch_size < 1 || self.minibatch_size > m {
            return Err(Error::Parameter(format!("minibatch_size must be in 1..={m}, got {}", self.minibatch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        self.arch.validate()
    }

    pub fn minibatches_per_iteration(&self, m: usize) -> usize {
        m / self.minibatch_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub j_total: f64,
    pub j_a: f64,
    pub j_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<StepRecord>,
    pub final_params: VaeParams,
    pub norm: NormStats,
    pub config: TrainConfig,
}

/// Objective value and parameter gradients for one minibatch.
pub fn objective_and_gradients<R: Rng + ?Sized>(
    params: &VaeParams,
    x: &BatchTensor,
    w: f64,
    kl_form: KlForm,
    rng: &mut R,
) -> Result<(ObjectiveValue, Gradients)> {
    let out = forward(params, x, rng)?;
    let (j_a, grad_generated) = accuracy_loss_frames(x, &out.generated)?;
    let kl = generalization_loss(&out.mu, &out.logvar, x.batch(), kl_form)?;
    let value = total_objective(j_a, kl.value, w)?;
    let grad_mu: Vec<f64> = kl.grad_mu.iter().map(|g| w * g).collect();
    let grad_logvar: Vec<f64> = kl.grad_logvar.iter().map(|g| w * g).collect();
    let grads = backward(params, &out.cache, &grad_generated, &grad_mu, &grad_logvar)?;
    Ok((value, grads))
}

/// Objective value only, drawing the latent noise from `rng` exactly as
/// [`objective_and_gradients`] does.
pub fn objective_value<R: Rng + ?Sized>(
    params: &VaeParams,
    x: &BatchTensor,
    w: f64,
    kl_form: KlForm,
    rng: &mut R,
) -> Result<ObjectiveValue> {
    let out = forward(params, x, rng)?;
    let (j_a, _) = accuracy_loss_frames(x, &out.generated)?;
    let kl = generalization_loss(&out.mu, &out.logvar, x.batch(), kl_form)?;
    total_objective(j_a, kl.value, w)
}

/// `params -= learning_rate * grads`.
pub fn sgd_step(params: &mut VaeParams, grads: &Gradients, learning_rate: f64) {
    for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (pv, gv) in p.data.iter_mut().zip(&g.data) {
            *pv -= learning_rate * gv;
        }
    }
}

/// Windows the data to the network length and z-scores it.
pub fn prepare(data: &TrajectoryBatch, arch: &ArchSpec) -> Result<(BatchTensor, NormStats)> {
    let windowed = window(data, arch.input_length)?;
    normalize(&windowed)
}

/// Plain minibatch SGD. Each iteration reshuffles the trajectories and
/// visits `floor(m / minibatch_size)` minibatches; leftovers sit out until
/// the next shuffle.
pub fn train(data: &TrajectoryBatch, config: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(data, config, |_| {})
}

/// [`train`] with a callback after every minibatch step.
pub fn train_with_progress<F: FnMut(&StepRecord)>(
    data: &TrajectoryBatch,
    config: &TrainConfig,
    mut progress: F,
) -> Result<TrainReport> {
    let m = data.len();
    config.validate(m)?;
    let (x, norm) = prepare(data, &config.arch)?;
    let mut params = init_params(config.arch, derive_seed(config.seed, INIT_STREAM))?;
    let mut rng = seeded(derive_seed(config.seed, TRAIN_STREAM));
    let per_iter = config.minibatches_per_iteration(m);
    let mut history = Vec::with_capacity(config.iterations * per_iter);
    let mut order: Vec<usize> = (0..m).collect();

    for _ in 0..config.iterations {
        order.shuffle(&mut rng);
        for chunk in order.chunks_exact(config.minibatch_size) {
            let step = history.len();
            let xb = x.select(chunk);
            let (value, grads) = match objective_and_gradients(&params, &xb, config.w, config.kl_form, &mut rng) {
                Ok(v) => v,
                Err(Error::Domain(_)) => return Err(Error::Divergence { step, value: f64::NAN }),
                Err(e) => return Err(e),
            };
            if !value.j_total.is_finite() {
                return Err(Error::Divergence { step, value: value.j_total });
            }
            let record = StepRecord { step, j_total: value.j_total, j_a: value.j_a, j_g: value.j_g };
            progress(&record);
            history.push(record);
            sgd_step(&mut params, &grads, config.learning_rate);
            if !params.all_finite() {
                return Err(Error::Divergence { step, value: f64::NAN });
            }
        }
    }
    Ok(TrainReport { history, final_params: params, norm, config: *config })
}

/// Decodes `count` unit-Gaussian codes into trajectories in data units.
pub fn sample_model<R: Rng + ?Sized>(
    params: &VaeParams,
    norm: &NormStats,
    count: usize,
    rng: &mut R,
) -> Result<TrajectoryBatch> {
    if count == 0 {
        return Err(Error::Parameter("count must be >= 1".into()));
    }
    let codes: Vec<f64> = (0..count * params.arch.latent_dim).map(|_| gaussian(rng)).collect();
    let out = decode(params, &codes, count)?;
    denormalize(&out, norm)
}

/// One trained and scored model of a weight sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub w: f64,
    /// Seed of this run, `derive_seed(base.seed, index)`.
    pub seed: u64,
    pub report: TrainReport,
    pub generated: TrajectoryBatch,
    pub score: ScoreCard,
}

/// Trains at weight `w` with the run seed derived from `base.seed` and the
/// point's position in the sweep, samples `count` trajectories (sub-stream
/// 3 of the run seed) and scores them against `truth`.
pub fn sweep_point(
    truth: &TrajectoryBatch,
    base: &TrainConfig,
    w: f64,
    index: usize,
    count: usize,
) -> Result<SweepPoint> {
    let seed = derive_seed(base.seed, index as u64);
    let config = TrainConfig { w, seed, ..*base };
    let report = train(truth, &config)?;
    let mut rng = seeded(derive_seed(seed, SAMPLE_STREAM));
    let generated = sample_model(&report.final_params, &report.norm, count, &mut rng)?;
    let score = score_model(truth, &generated, Some(w))?;
    Ok(SweepPoint { w, seed, report, generated, score })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub parameters_checked: usize,
}

/// `|a - n| / max(|a|, |n|, AUDIT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(AUDIT_FLOOR)
}

/// Compares backprop against central differences for every parameter of
/// a tiny network (L <= 16, latent <= 4) on `AUDIT_BATCH` trajectories.
///
/// A config whose architecture is already that small is used as is;
/// otherwise [`ArchSpec::tiny`] replaces it.
pub fn gradient_audit(data: &TrajectoryBatch, config: &TrainConfig) -> Result<AuditReport> {
    let mut cfg = *config;
    if cfg.arch.input_length > 16 || cfg.arch.latent_dim > 4 {
        cfg.arch = ArchSpec::tiny();
    }
    check_weight(cfg.w)?;
    cfg.arch.validate()?;
    let (x, _) = prepare(data, &cfg.arch)?;
    let mut rng = seeded(derive_seed(cfg.seed, AUDIT_STREAM));
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    order.truncate(AUDIT_BATCH.min(data.len()));
    let xb = x.select(&order);
    let noise_seed: u64 = rng.random();
    let params = init_params(cfg.arch, derive_seed(cfg.seed, INIT_STREAM))?;
    audit_params(&params, &xb, cfg.w, cfg.kl_form, noise_seed)
}

/// Finite-difference audit of given parameters on a given minibatch; the
/// latent noise is redrawn from `noise_seed` for every evaluation.
pub fn audit_params(
    params: &VaeParams,
    x: &BatchTensor,
    w: f64,
    kl_form: KlForm,
    noise_seed: u64,
) -> Result<AuditReport> {
    let (_, grads) = objective_and_gradients(params, x, w, kl_form, &mut seeded(noise_seed))?;
    let names: Vec<String> = params.arch.tensor_shapes().into_iter().map(|(n, _)| n).collect();
    let mut probe = params.clone();
    let mut report = AuditReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        parameters_checked: 0,
    };
    let grad_tensors: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
    for (t, name) in names.iter().enumerate() {
        for i in 0..grad_tensors[t].data.len() {
            let orig = probe.tensors()[t].data[i];
            let eval = |p: &VaeParams| -> Result<f64> {
                Ok(objective_value(p, x, w, kl_form, &mut seeded(noise_seed))?.j_total)
            };
            probe.tensors_mut()[t].data[i] = orig + AUDIT_STEP;
            let plus = eval(&probe)?;
            probe.tensors_mut()[t].data[i] = orig - AUDIT_STEP;
            let minus = eval(&probe)?;
            probe.tensors_mut()[t].data[i] = orig;
            let numeric = (plus - minus) / (2.0 * AUDIT_STEP);
            let analytic = grad_tensors[t].data[i];
            let err = relative_error(analytic, numeric);
            report.parameters_checked += 1;
            if err > report.max_relative_error || report.worst_tensor.is_empty() {
                report.max_relative_error = err;
                report.worst_tensor = name.clone();
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

pub const CHECKPOINT_FORMAT: &str = "lagvae-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    arch: ArchSpec,
    norm: NormStats,
    config: TrainConfig,
    tensors: Vec<NamedTensor>,
}

/// What a checkpoint restores.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: VaeParams,
    pub norm: NormStats,
    pub config: TrainConfig,
}

impl From<&TrainReport> for Checkpoint {
    fn from(r: &TrainReport) -> Self {
        Self { params: r.final_params.clone(), norm: r.norm, config: r.config }
    }
}

pub fn checkpoint_to_json(ckpt: &Checkpoint) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        arch: ckpt.params.arch,
        norm: ckpt.norm,
        config: ckpt.config,
        tensors: ckpt
            .params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor { name, shape: t.shape.clone(), data: t.data.clone() })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Checkpoint { path: String::new(), msg: e.to_string() })
}

pub fn checkpoint_from_json(text: &str) -> Result<Checkpoint> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: CheckpointFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Checkpoint { path: e.path().to_string(), msg: e.inner().to_string() })?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            path: "format".into(),
            msg: format!("unsupported checkpoint {} v{}", file.format, file.version),
        });
    }
    if file.arch != file.config.arch {
        return Err(Error::Checkpoint { path: "config.arch".into(), msg: "differs from top-level arch".into() });
    }
    let expected = file.arch.tensor_shapes();
    if expected.len() != file.tensors.len() {
        return Err(Error::Checkpoint {
            path: "tensors".into(),
            msg: format!("expected {} tensors, found {}", expected.len(), file.tensors.len()),
        });
    }
    let mut tensors = Vec::with_capacity(expected.len());
    for (k, ((name, shape), t)) in expected.iter().zip(file.tensors).enumerate() {
        let path = format!("tensors[{k}]");
        if &t.name != name {
            return Err(Error::Checkpoint { path, msg: format!("expected `{name}`, found `{}`", t.name) });
        }
        if &t.shape != shape {
            return Err(Error::Checkpoint {
                path,
                msg: format!("{name}: arch requires shape {shape:?}, found {:?}", t.shape),
            });
        }
        tensors.push(Tensor::from_vec(&t.shape, t.data).map_err(|e| Error::Checkpoint { path, msg: e.to_string() })?);
    }
    let params = VaeParams::from_tensors(file.arch, tensors)?;
    if !params.all_finite() {
        return Err(Error::Checkpoint { path: "tensors".into(), msg: "non-finite weight".into() });
    }
    Ok(Checkpoint { params, norm: file.norm, config: file.config })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(checkpoint_to_json(ckpt)?.as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut text = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(File::open(path.as_ref())?), &mut text)?;
    checkpoint_from_json(&text)
}

/// Loss history as `step,j_total,j_a,j_g`.
pub fn write_history<W: Write>(history: &[StepRecord], out: &mut W) -> Result<()> {
    writeln!(out, "step,j_total,j_a,j_g")?;
    for r in history {
        writeln!(out, "{},{:?},{:?},{:?}", r.step, r.j_total, r.j_a, r.j_g)?;
    }
    Ok(())
}
