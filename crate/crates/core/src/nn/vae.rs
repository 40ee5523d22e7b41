use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{conv1d, conv1d_input_grad, conv1d_weight_grad, ConvGeometry};
use super::tensor::{BatchTensor, Tensor};
use crate::error::{Error, Result};
use crate::rng::{gaussian, seeded};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Hidden-layer nonlinearity. Output layers (latent heads and the last
/// decoder layer) are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu(f64),
}

impl Activation {
    fn slope(self) -> f64 {
        match self {
            Activation::LeakyRelu(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input_channels: usize,
    pub input_length: usize,
    pub conv_channels: [usize; 3],
    pub kernel_size: usize,
    pub stride: usize,
    pub latent_dim: usize,
    pub activation: Activation,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            input_channels: 3,
            input_length: 1024,
            conv_channels: [16, 32, 64],
            kernel_size: 8,
            stride: 4,
            latent_dim: 32,
            activation: Activation::LeakyRelu(LEAKY_SLOPE),
        }
    }
}

impl ArchSpec {
    /// Small network used by gradient audits: L = 8, latent 2.
    pub fn tiny() -> Self {
        Self {
            input_channels: 3,
            input_length: 8,
            conv_channels: [2, 3, 4],
            kernel_size: 4,
            stride: 2,
            latent_dim: 2,
            activation: Activation::LeakyRelu(LEAKY_SLOPE),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_channels", self.input_channels),
            ("input_length", self.input_length),
            ("conv_channels[0]", self.conv_channels[0]),
            ("conv_channels[1]", self.conv_channels[1]),
            ("conv_channels[2]", self.conv_channels[2]),
            ("kernel_size", self.kernel_size),
            ("stride", self.stride),
            ("latent_dim", self.latent_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Parameter(format!("{name} must be >= 1")));
        }
        if self.kernel_size < self.stride || (self.kernel_size - self.stride) % 2 != 0 {
            return Err(Error::Parameter(format!(
                "kernel_size - stride must be even and non-negative (kernel {}, stride {})",
                self.kernel_size, self.stride
            )));
        }
        let reduction = self.stride.pow(3);
        if self.input_length % reduction != 0 {
            return Err(Error::Parameter(format!(
                "input_length {} not divisible by stride^3 = {reduction}",
                self.input_length
            )));
        }
        let slope = self.activation.slope();
        if !slope.is_finite() {
            return Err(Error::Parameter(format!("activation slope {slope} not finite")));
        }
        Ok(())
    }

    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry { kernel: self.kernel_size, stride: self.stride, pad: (self.kernel_size - self.stride) / 2 }
    }

    /// Sequence length after `level` encoder layers.
    pub fn length_at(&self, level: u32) -> usize {
        self.input_length / self.stride.pow(level)
    }

    /// Channel count after `level` encoder layers (level 0 is the input).
    pub fn channels_at(&self, level: usize) -> usize {
        if level == 0 {
            self.input_channels
        } else {
            self.conv_channels[level - 1]
        }
    }

    /// Size of the flattened last feature map.
    pub fn feature_size(&self) -> usize {
        self.conv_channels[2] * self.length_at(3)
    }

    /// Expected (name, shape) of every trainable tensor, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel_size;
        let (feat, d) = (self.feature_size(), self.latent_dim);
        let mut out = Vec::new();
        for l in 0..3 {
            let (cin, cout) = (self.channels_at(l), self.channels_at(l + 1));
            out.push((format!("encoder.{l}.weight"), vec![cout, cin, k]));
            out.push((format!("encoder.{l}.bias"), vec![cout]));
        }
        out.push(("mu_head.weight".into(), vec![d, feat]));
        out.push(("mu_head.bias".into(), vec![d]));
        out.push(("logvar_head.weight".into(), vec![d, feat]));
        out.push(("logvar_head.bias".into(), vec![d]));
        out.push(("decoder.dense.weight".into(), vec![feat, d]));
        out.push(("decoder.dense.bias".into(), vec![feat]));
        for l in 0..3 {
            // Mirror of encoder layer 2 - l, stored as (in, out, kernel).
            let (cin, cout) = (self.channels_at(3 - l), self.channels_at(2 - l));
            out.push((format!("decoder.{l}.weight"), vec![cin, cout, k]));
            out.push((format!("decoder.{l}.bias"), vec![cout]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Every trainable variable of the network plus its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub arch: ArchSpec,
    /// Strided convolutions, weights `out x in x kernel`.
    pub encoder: [Layer; 3],
    /// `latent x features`.
    pub mu_head: Layer,
    pub logvar_head: Layer,
    /// `features x latent`.
    pub decoder_dense: Layer,
    /// Transposed convolutions, weights `in x out x kernel`.
    pub decoder: [Layer; 3],
}

/// Parameter gradients share the parameter layout.
pub type Gradients = VaeParams;

impl VaeParams {
    /// All-zero tensors with the shapes `arch` prescribes.
    pub fn zeros(arch: ArchSpec) -> Result<Self> {
        arch.validate()?;
        let tensors = arch.tensor_shapes().into_iter().map(|(_, s)| Tensor::zeros(&s)).collect();
        Self::from_tensors(arch, tensors)
    }

    /// Rebuilds parameters from tensors listed in [`ArchSpec::tensor_shapes`]
    /// order, checking every shape.
    pub fn from_tensors(arch: ArchSpec, tensors: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.tensor_shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", shapes.len(), tensors.len())));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Shape(format!(
                    "{name}: expected shape {shape:?}, got {:?} with {} values",
                    t.shape,
                    t.data.len()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut layer = || Layer { weight: it.next().expect("count checked"), bias: it.next().expect("count checked") };
        let encoder = [layer(), layer(), layer()];
        let mu_head = layer();
        let logvar_head = layer();
        let decoder_dense = layer();
        let decoder = [layer(), layer(), layer()];
        Ok(Self { arch, encoder, mu_head, logvar_head, decoder_dense, decoder })
    }

    fn layers(&self) -> [&Layer; 9] {
        [
            &self.encoder[0],
            &self.encoder[1],
            &self.encoder[2],
            &self.mu_head,
            &self.logvar_head,
            &self.decoder_dense,
            &self.decoder[0],
            &self.decoder[1],
            &self.decoder[2],
        ]
    }

    fn layers_mut(&mut self) -> [&mut Layer; 9] {
        let [e0, e1, e2] = &mut self.encoder;
        let [d0, d1, d2] = &mut self.decoder;
        [e0, e1, e2, &mut self.mu_head, &mut self.logvar_head, &mut self.decoder_dense, d0, d1, d2]
    }

    /// Tensors in [`ArchSpec::tensor_shapes`] order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers().into_iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut().into_iter().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.arch.tensor_shapes().into_iter().map(|(n, _)| n).zip(self.tensors()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// FNV-1a over the bit patterns of every weight; ties a forward cache to
    /// the exact parameters that produced it.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in &t.data {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Uniform He initialization scaled for the leaky slope; biases start at 0.
pub fn init_params(arch: ArchSpec, seed: u64) -> Result<VaeParams> {
    let mut params = VaeParams::zeros(arch)?;
    let mut rng = seeded(seed);
    let slope = arch.activation.slope();
    let gain = (2.0 / (1.0 + slope * slope)).sqrt();
    let (k, s) = (arch.kernel_size as f64, arch.stride as f64);
    let fan_in = [
        arch.channels_at(0) as f64 * k,
        arch.channels_at(1) as f64 * k,
        arch.channels_at(2) as f64 * k,
        arch.feature_size() as f64,
        arch.feature_size() as f64,
        arch.latent_dim as f64,
        arch.channels_at(3) as f64 * k / s,
        arch.channels_at(2) as f64 * k / s,
        arch.channels_at(1) as f64 * k / s,
    ];
    // Layers 3, 4 (latent heads) and 8 (decoder output) are linear.
    for (idx, (layer, fan)) in params.layers_mut().into_iter().zip(fan_in).enumerate() {
        let g = if matches!(idx, 3 | 4 | 8) { 1.0 } else { gain };
        let bound = g * (3.0 / fan).sqrt();
        for w in layer.weight.data.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

/// Mean, scale, noise and sample for a batch of latent codes, each
/// `batch x dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub batch: usize,
    pub dim: usize,
    pub mu: Vec<f64>,
    /// `exp(logvar / 2)`, strictly positive.
    pub sigma: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// `mu + sigma * epsilon`.
    pub sample: Vec<f64>,
}

/// Reparameterized draw `mu + exp(logvar / 2) * eps`, `eps ~ N(0, 1)`.
pub fn sample_latent<R: Rng + ?Sized>(mu: &[f64], logvar: &[f64], dim: usize, rng: &mut R) -> Result<LatentCode> {
    if mu.len() != logvar.len() || dim == 0 || mu.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "mu ({}) and logvar ({}) must share a batch x {dim} shape",
            mu.len(),
            logvar.len()
        )));
    }
    let sigma: Vec<f64> = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
    let epsilon: Vec<f64> = (0..mu.len()).map(|_| gaussian(rng)).collect();
    let sample = mu.iter().zip(&sigma).zip(&epsilon).map(|((m, s), e)| m + s * e).collect();
    Ok(LatentCode { batch: mu.len() / dim, dim, mu: mu.to_vec(), sigma, epsilon, sample })
}

fn leaky(v: &mut [f64], slope: f64) {
    for x in v {
        if *x < 0.0 {
            *x *= slope;
        }
    }
}

/// Multiplies `grad` by the leaky-ReLU derivative, read off the activated
/// output (same sign as the pre-activation for a positive slope).
fn leaky_backward(grad: &mut [f64], activated: &[f64], slope: f64) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g *= slope;
        }
    }
}

fn add_bias(y: &mut [f64], bias: &[f64], len: usize) {
    for (row, chunk) in y.chunks_mut(len).enumerate() {
        let b = bias[row % bias.len()];
        for v in chunk {
            *v += b;
        }
    }
}

fn bias_grad(dy: &[f64], channels: usize, len: usize) -> Vec<f64> {
    let mut gb = vec![0.0; channels];
    for (row, chunk) in dy.chunks(len).enumerate() {
        gb[row % channels] += chunk.iter().sum::<f64>();
    }
    gb
}

/// `y[n, o] = b[o] + sum_f w[o, f] x[n, f]`.
fn dense(x: &[f64], batch: usize, fan_in: usize, layer: &Layer) -> Vec<f64> {
    let fan_out = layer.bias.len();
    let mut y = Vec::with_capacity(batch * fan_out);
    for n in 0..batch {
        let xn = &x[n * fan_in..][..fan_in];
        for o in 0..fan_out {
            let wo = &layer.weight.data[o * fan_in..][..fan_in];
            let dot: f64 = wo.iter().zip(xn).map(|(w, v)| w * v).sum();
            y.push(layer.bias.data[o] + dot);
        }
    }
    y
}

/// Returns (dx, dw, db) for [`dense`].
fn dense_backward(x: &[f64], dy: &[f64], batch: usize, fan_in: usize, layer: &Layer) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let fan_out = layer.bias.len();
    let mut dx = vec![0.0; batch * fan_in];
    let mut dw = vec![0.0; fan_out * fan_in];
    let mut db = vec![0.0; fan_out];
    for n in 0..batch {
        let xn = &x[n * fan_in..][..fan_in];
        let dxn = &mut dx[n * fan_in..][..fan_in];
        for o in 0..fan_out {
            let g = dy[n * fan_out + o];
            db[o] += g;
            let wo = &layer.weight.data[o * fan_in..][..fan_in];
            let dwo = &mut dw[o * fan_in..][..fan_in];
            for f in 0..fan_in {
                dwo[f] += g * xn[f];
                dxn[f] += g * wo[f];
            }
        }
    }
    (dx, dw, db)
}

struct EncoderPass {
    /// Activated outputs of the three convolutions.
    acts: [Vec<f64>; 3],
    mu: Vec<f64>,
    logvar: Vec<f64>,
}

fn check_input(params: &VaeParams, x: &BatchTensor) -> Result<()> {
    let a = &params.arch;
    if x.channels() != a.input_channels || x.len() != a.input_length || x.batch() == 0 {
        return Err(Error::Shape(format!(
            "input is {:?}, network expects batch x {} x {}",
            x.shape(),
            a.input_channels,
            a.input_length
        )));
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("network input contains non-finite values".into()));
    }
    Ok(())
}

fn run_encoder(params: &VaeParams, x: &BatchTensor) -> EncoderPass {
    let a = &params.arch;
    let (g, slope, m) = (a.geometry(), a.activation.slope(), x.batch());
    let mut acts: [Vec<f64>; 3] = Default::default();
    for l in 0..3 {
        let input: &[f64] = if l == 0 { x.data() } else { &acts[l - 1] };
        let (cin, cout) = (a.channels_at(l), a.channels_at(l + 1));
        let (lin, lout) = (a.length_at(l as u32), a.length_at(l as u32 + 1));
        let layer = &params.encoder[l];
        let mut y = conv1d(input, m, cin, lin, &layer.weight.data, cout, g, lout);
        add_bias(&mut y, &layer.bias.data, lout);
        leaky(&mut y, slope);
        acts[l] = y;
    }
    let feat = a.feature_size();
    let mu = dense(&acts[2], m, feat, &params.mu_head);
    let logvar = dense(&acts[2], m, feat, &params.logvar_head);
    EncoderPass { acts, mu, logvar }
}

/// Activated decoder outputs: dense expansion, two hidden transposed
/// convolutions, and the linear output layer.
fn run_decoder(params: &VaeParams, code: &[f64], m: usize) -> [Vec<f64>; 4] {
    let a = &params.arch;
    let (g, slope) = (a.geometry(), a.activation.slope());
    let mut h0 = dense(code, m, a.latent_dim, &params.decoder_dense);
    leaky(&mut h0, slope);
    let mut outs: [Vec<f64>; 4] = [h0, Vec::new(), Vec::new(), Vec::new()];
    for l in 0..3 {
        let (cin, cout) = (a.channels_at(3 - l), a.channels_at(2 - l));
        let (lin, lout) = (a.length_at(3 - l as u32), a.length_at(2 - l as u32));
        let layer = &params.decoder[l];
        let mut y = conv1d_input_grad(&outs[l], m, cin, lin, &layer.weight.data, cout, g, lout);
        add_bias(&mut y, &layer.bias.data, lout);
        if l < 2 {
            leaky(&mut y, slope);
        }
        outs[l + 1] = y;
    }
    outs
}

/// Encodes a normalized `m x channels x L` batch into `(mu, logvar)`, each
/// `m x latent_dim`.
pub fn encode(params: &VaeParams, x: &BatchTensor) -> Result<(Vec<f64>, Vec<f64>)> {
    check_input(params, x)?;
    let pass = run_encoder(params, x);
    Ok((pass.mu, pass.logvar))
}

/// Decodes `m x latent_dim` codes into an `m x channels x L` batch.
pub fn decode(params: &VaeParams, code: &[f64], m: usize) -> Result<BatchTensor> {
    let a = &params.arch;
    if code.len() != m * a.latent_dim || m == 0 {
        return Err(Error::Shape(format!("code has {} values, expected {m} x {}", code.len(), a.latent_dim)));
    }
    if code.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("latent code contains non-finite values".into()));
    }
    let [_, _, _, out] = run_decoder(params, code, m);
    BatchTensor::from_vec(m, a.input_channels, a.input_length, out)
}

/// Intermediate activations kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    arch: ArchSpec,
    digest: u64,
    input: BatchTensor,
    enc_acts: [Vec<f64>; 3],
    code: LatentCode,
    /// Dense expansion and the two hidden transposed-conv outputs.
    dec_acts: [Vec<f64>; 3],
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.input.batch()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub generated: BatchTensor,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub code: LatentCode,
    pub cache: ForwardCache,
}

/// encode, sample the latent code with `rng`, decode.
pub fn forward<R: Rng + ?Sized>(params: &VaeParams, x: &BatchTensor, rng: &mut R) -> Result<ForwardOutput> {
    check_input(params, x)?;
    let a = params.arch;
    let m = x.batch();
    let enc = run_encoder(params, x);
    let code = sample_latent(&enc.mu, &enc.logvar, a.latent_dim, rng)?;
    let [h0, h1, h2, out] = run_decoder(params, &code.sample, m);
    let generated = BatchTensor::from_vec(m, a.input_channels, a.input_length, out)?;
    Ok(ForwardOutput {
        generated,
        mu: enc.mu,
        logvar: enc.logvar,
        code: code.clone(),
        cache: ForwardCache {
            arch: a,
            digest: params.digest(),
            input: x.clone(),
            enc_acts: enc.acts,
            code,
            dec_acts: [h0, h1, h2],
        },
    })
}

/// Exact gradients of a scalar objective given its partial derivatives with
/// respect to the generated batch, `mu` and `logvar`. The reparameterized
/// sample contributes `d/dmu = 1` and `d/dlogvar = eps * sigma / 2`.
pub fn backward(
    params: &VaeParams,
    cache: &ForwardCache,
    grad_generated: &BatchTensor,
    grad_mu: &[f64],
    grad_logvar: &[f64],
) -> Result<Gradients> {
    let a = params.arch;
    if cache.arch != a || cache.digest != params.digest() {
        return Err(Error::Invariant("forward cache was produced by different parameters".into()));
    }
    let m = cache.batch();
    let d = a.latent_dim;
    if grad_generated.shape() != cache.input.shape() {
        return Err(Error::Shape(format!(
            "grad_generated is {:?}, forward output was {:?}",
            grad_generated.shape(),
            cache.input.shape()
        )));
    }
    if grad_mu.len() != m * d || grad_logvar.len() != m * d {
        return Err(Error::Shape(format!(
            "latent gradients must be {m} x {d}, got {} and {}",
            grad_mu.len(),
            grad_logvar.len()
        )));
    }
    let (g, slope) = (a.geometry(), a.activation.slope());
    let mut grads = VaeParams::zeros(a)?;

    // Decoder, output layer first.
    let mut dy = grad_generated.data().to_vec();
    for l in (0..3).rev() {
        let (cin, cout) = (a.channels_at(3 - l), a.channels_at(2 - l));
        let (lin, lout) = (a.length_at(3 - l as u32), a.length_at(2 - l as u32));
        let input = &cache.dec_acts[l];
        let layer = &params.decoder[l];
        grads.decoder[l].bias.data = bias_grad(&dy, cout, lout);
        grads.decoder[l].weight.data = conv1d_weight_grad(&dy, m, cout, lout, input, cin, g, lin);
        let mut dx = conv1d(&dy, m, cout, lout, &layer.weight.data, cin, g, lin);
        leaky_backward(&mut dx, input, slope);
        dy = dx;
    }
    let (dsample, dw, db) = dense_backward(&cache.code.sample, &dy, m, d, &params.decoder_dense);
    grads.decoder_dense.weight.data = dw;
    grads.decoder_dense.bias.data = db;

    // Reparameterization.
    let code = &cache.code;
    let dmu: Vec<f64> = grad_mu.iter().zip(&dsample).map(|(a, b)| a + b).collect();
    let dlogvar: Vec<f64> =
        (0..m * d).map(|i| grad_logvar[i] + dsample[i] * code.epsilon[i] * 0.5 * code.sigma[i]).collect();

    let feat = a.feature_size();
    let (dfeat_mu, dw, db) = dense_backward(&cache.enc_acts[2], &dmu, m, feat, &params.mu_head);
    grads.mu_head.weight.data = dw;
    grads.mu_head.bias.data = db;
    let (dfeat_lv, dw, db) = dense_backward(&cache.enc_acts[2], &dlogvar, m, feat, &params.logvar_head);
    grads.logvar_head.weight.data = dw;
    grads.logvar_head.bias.data = db;

    // Encoder, last layer first.
    let mut dact: Vec<f64> = dfeat_mu.iter().zip(&dfeat_lv).map(|(a, b)| a + b).collect();
    for l in (0..3).rev() {
        let (cin, cout) = (a.channels_at(l), a.channels_at(l + 1));
        let (lin, lout) = (a.length_at(l as u32), a.length_at(l as u32 + 1));
        leaky_backward(&mut dact, &cache.enc_acts[l], slope);
        let input: &[f64] = if l == 0 { cache.input.data() } else { &cache.enc_acts[l - 1] };
        grads.encoder[l].bias.data = bias_grad(&dact, cout, lout);
        grads.encoder[l].weight.data = conv1d_weight_grad(input, m, cin, lin, &dact, cout, g, lout);
        if l > 0 {
            dact = conv1d_input_grad(&dact, m, cout, lout, &params.encoder[l].weight.data, cin, g, lin);
        }
    }
    Ok(grads)
}
