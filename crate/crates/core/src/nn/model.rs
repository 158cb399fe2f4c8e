use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::{check_rate, dropout_in_place, selu_grad_scalar, selu_scalar, CellActivation};
use super::lstm::{lstm_cell_backward, lstm_cell_forward, CellCache, LstmParams};
use crate::error::{Error, Result};
use crate::tensor::{matmul_w_acc, matmul_wt_acc, outer_acc, Tensor};
use crate::windowing::WindowBatch;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub encoder_width: usize,
    pub dropout_rate: f64,
    pub cell_activation: CellActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            encoder_width: 64,
            dropout_rate: 0.2,
            cell_activation: CellActivation::Selu,
        }
    }
}

/// Fully connected layer, `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub n_in: usize,
    pub n_out: usize,
    /// `[n_out × n_in]`
    pub weight: Vec<f64>,
    /// `[n_out]`
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weight: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_in, n_out);
        let lim = (6.0 / (n_in + n_out).max(1) as f64).sqrt();
        p.weight.iter_mut().for_each(|w| *w = rng.gen_range(-lim..=lim));
        p
    }

    fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut y = Vec::with_capacity(batch * self.n_out);
        for _ in 0..batch {
            y.extend_from_slice(&self.bias);
        }
        matmul_wt_acc(x, &self.weight, self.n_in, self.n_out, &mut y);
        y
    }

    /// Accumulates parameter gradients; returns `dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grads: &mut DenseParams) -> Vec<f64> {
        outer_acc(dy, x, self.n_in, self.n_out, &mut grads.weight);
        for row in dy.chunks(self.n_out) {
            for (gb, d) in grads.bias.iter_mut().zip(row) {
                *gb += d;
            }
        }
        let mut dx = vec![0.0; (dy.len() / self.n_out.max(1)) * self.n_in];
        matmul_w_acc(dy, &self.weight, self.n_in, self.n_out, &mut dx);
        dx
    }
}

/// All learnable weights of the encoder → LSTM → decoder network.
///
/// Per timestep the known and observed inputs are concatenated (observed
/// slots are zero on forecast steps), passed through the SELU dense encoder
/// and dropout, then stepped through the LSTM. On each forecast step the
/// hidden state goes through SELU, dropout and a linear output head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n_known: usize,
    pub n_observed: usize,
    pub encoder: DenseParams,
    pub lstm: LstmParams,
    pub decoder: DenseParams,
    pub dropout_rate: f64,
    pub cell_activation: CellActivation,
}

/// Gradients with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: DenseParams,
    pub lstm: LstmParams,
    pub decoder: DenseParams,
}

impl ModelGrads {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            encoder: DenseParams::zeros(p.encoder.n_in, p.encoder.n_out),
            lstm: LstmParams::zeros(p.lstm.input_size, p.lstm.hidden_size),
            decoder: DenseParams::zeros(p.decoder.n_in, p.decoder.n_out),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 7] {
        [
            ("encoder.weight", &self.encoder.weight),
            ("encoder.bias", &self.encoder.bias),
            ("lstm.input_weights", &self.lstm.input_weights),
            ("lstm.recurrent_weights", &self.lstm.recurrent_weights),
            ("lstm.bias", &self.lstm.bias),
            ("decoder.weight", &self.decoder.weight),
            ("decoder.bias", &self.decoder.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [
            &mut self.encoder.weight,
            &mut self.encoder.bias,
            &mut self.lstm.input_weights,
            &mut self.lstm.recurrent_weights,
            &mut self.lstm.bias,
            &mut self.decoder.weight,
            &mut self.decoder.bias,
        ]
    }
}

impl ModelParams {
    /// Seeded initialization: fan-based uniform weights, forget-gate bias 1,
    /// all other biases 0.
    pub fn init(n_known: usize, n_observed: usize, n_target: usize, config: &ModelConfig, seed: u64) -> Result<Self> {
        check_rate(config.dropout_rate)?;
        if config.hidden_size == 0 || config.encoder_width == 0 || n_target == 0 {
            return Err(Error::Config("hidden size, encoder width and target count must be >= 1".into()));
        }
        if n_known + n_observed == 0 {
            return Err(Error::Config("model has no inputs".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = DenseParams::init(n_known + n_observed, config.encoder_width, &mut rng);
        let lstm = LstmParams::init(config.encoder_width, config.hidden_size, &mut rng);
        let decoder = DenseParams::init(config.hidden_size, n_target, &mut rng);
        Ok(Self {
            n_known,
            n_observed,
            encoder,
            lstm,
            decoder,
            dropout_rate: config.dropout_rate,
            cell_activation: config.cell_activation,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size
    }

    pub fn n_target(&self) -> usize {
        self.decoder.n_out
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            hidden_size: self.lstm.hidden_size,
            encoder_width: self.encoder.n_out,
            dropout_rate: self.dropout_rate,
            cell_activation: self.cell_activation,
        }
    }

    /// Checks the dimension chain and that every weight is finite.
    pub fn validate(&self) -> Result<()> {
        let ok = self.encoder.n_in == self.n_known + self.n_observed
            && self.encoder.n_out == self.lstm.input_size
            && self.lstm.hidden_size == self.decoder.n_in
            && self.encoder.weight.len() == self.encoder.n_in * self.encoder.n_out
            && self.encoder.bias.len() == self.encoder.n_out
            && self.lstm.input_weights.len() == 4 * self.lstm.hidden_size * self.lstm.input_size
            && self.lstm.recurrent_weights.len() == 4 * self.lstm.hidden_size * self.lstm.hidden_size
            && self.lstm.bias.len() == 4 * self.lstm.hidden_size
            && self.decoder.weight.len() == self.decoder.n_in * self.decoder.n_out
            && self.decoder.bias.len() == self.decoder.n_out;
        if !ok {
            return Err(Error::Shape("model parameter dimensions are inconsistent".into()));
        }
        check_rate(self.dropout_rate)?;
        for (name, t) in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 7] {
        [
            ("encoder.weight", &self.encoder.weight),
            ("encoder.bias", &self.encoder.bias),
            ("lstm.input_weights", &self.lstm.input_weights),
            ("lstm.recurrent_weights", &self.lstm.recurrent_weights),
            ("lstm.bias", &self.lstm.bias),
            ("decoder.weight", &self.decoder.weight),
            ("decoder.bias", &self.decoder.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [
            &mut self.encoder.weight,
            &mut self.encoder.bias,
            &mut self.lstm.input_weights,
            &mut self.lstm.recurrent_weights,
            &mut self.lstm.bias,
            &mut self.decoder.weight,
            &mut self.decoder.bias,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Debug, Clone)]
struct DecodeCache {
    h: Vec<f64>,
    mask: Option<Vec<f64>>,
    input: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    enc_pre: Vec<f64>,
    enc_mask: Option<Vec<f64>>,
    cell: CellCache,
    decode: Option<DecodeCache>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    context: usize,
    horizon: usize,
    n_target: usize,
    steps: Vec<StepCache>,
}

impl ForwardCache {
    pub fn prediction_shape(&self) -> [usize; 3] {
        [self.batch, self.horizon, self.n_target]
    }
}

fn step_input(src: &Tensor, b: usize, t: usize, out: &mut Vec<f64>) {
    let w = src.last_dim();
    let steps = src.shape()[1];
    let off = (b * steps + t) * w;
    out.extend_from_slice(&src.data()[off..off + w]);
}

/// Runs the network over a batch; returns predictions `[B × horizon × F_target]`.
/// Dropout is active only when `training` is set.
pub fn model_forward<R: Rng + ?Sized>(
    params: &ModelParams,
    batch: &WindowBatch,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, ForwardCache)> {
    let bsz = batch.size();
    let (context, horizon) = (batch.context_len(), batch.horizon());
    let widths = (
        batch.known_past.last_dim(),
        batch.known_future.last_dim(),
        batch.observed_past.last_dim(),
    );
    if widths != (params.n_known, params.n_known, params.n_observed) {
        return Err(Error::Shape(format!(
            "batch widths (known {}, future {}, observed {}) do not match model (known {}, observed {})",
            widths.0, widths.1, widths.2, params.n_known, params.n_observed
        )));
    }
    if batch.targets.last_dim() != params.n_target() {
        return Err(Error::Shape(format!(
            "batch has {} targets, model predicts {}",
            batch.targets.last_dim(),
            params.n_target()
        )));
    }
    let rate = if training { params.dropout_rate } else { 0.0 };
    let hs = params.hidden_size();
    let n_in = params.n_known + params.n_observed;
    let n_target = params.n_target();

    let mut h = vec![0.0; bsz * hs];
    let mut c = vec![0.0; bsz * hs];
    let mut steps = Vec::with_capacity(context + horizon);
    let mut preds = Vec::with_capacity(bsz * horizon * n_target);
    let mut step_preds: Vec<Vec<f64>> = Vec::with_capacity(horizon);

    for t in 0..context + horizon {
        let future = t >= context;
        let mut x = Vec::with_capacity(bsz * n_in);
        for b in 0..bsz {
            if future {
                step_input(&batch.known_future, b, t - context, &mut x);
                x.extend(std::iter::repeat(0.0).take(params.n_observed));
            } else {
                step_input(&batch.known_past, b, t, &mut x);
                step_input(&batch.observed_past, b, t, &mut x);
            }
        }
        let enc_pre = params.encoder.forward(&x, bsz);
        let mut enc: Vec<f64> = enc_pre.iter().map(|&v| selu_scalar(v)).collect();
        let enc_mask = dropout_in_place(&mut enc, rate, rng);
        let (h_new, c_new, cell) = lstm_cell_forward(&params.lstm, params.cell_activation, &enc, &h, &c)?;
        h = h_new;
        c = c_new;

        let decode = if future {
            let mut input: Vec<f64> = h.iter().map(|&v| selu_scalar(v)).collect();
            let mask = dropout_in_place(&mut input, rate, rng);
            step_preds.push(params.decoder.forward(&input, bsz));
            Some(DecodeCache { h: h.clone(), mask, input })
        } else {
            None
        };
        steps.push(StepCache { x, enc_pre, enc_mask, cell, decode });
    }

    for b in 0..bsz {
        for sp in &step_preds {
            preds.extend_from_slice(&sp[b * n_target..(b + 1) * n_target]);
        }
    }
    let out = Tensor::new(vec![bsz, horizon, n_target], preds)?;
    out.ensure_finite("model output")?;
    Ok((out, ForwardCache { batch: bsz, context, horizon, n_target, steps }))
}

/// Exact gradients of `sum(grad_output ⊙ predictions)` with respect to every
/// parameter, by backpropagation through time.
pub fn model_backward(params: &ModelParams, cache: &ForwardCache, grad_output: &Tensor) -> Result<ModelGrads> {
    let expect = cache.prediction_shape();
    if grad_output.shape() != expect {
        return Err(Error::Shape(format!(
            "gradient shape {:?} does not match prediction shape {expect:?}",
            grad_output.shape()
        )));
    }
    if cache.n_target != params.n_target() || cache.steps.first().map(|s| s.cell.x.len()) != Some(cache.batch * params.lstm.input_size) {
        return Err(Error::Shape("forward cache was produced by a different model".into()));
    }
    let bsz = cache.batch;
    let hs = params.hidden_size();
    let n_target = cache.n_target;
    let mut grads = ModelGrads::zeros_like(params);
    let mut dh_next = vec![0.0; bsz * hs];
    let mut dc_next = vec![0.0; bsz * hs];

    for t in (0..cache.steps.len()).rev() {
        let step = &cache.steps[t];
        let mut dh = dh_next;
        if let Some(dec) = &step.decode {
            let k = t - cache.context;
            let mut dy = Vec::with_capacity(bsz * n_target);
            for b in 0..bsz {
                let off = (b * cache.horizon + k) * n_target;
                dy.extend_from_slice(&grad_output.data()[off..off + n_target]);
            }
            let mut d_in = params.decoder.backward(&dec.input, &dy, &mut grads.decoder);
            if let Some(mask) = &dec.mask {
                d_in.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
            for ((d, di), hv) in dh.iter_mut().zip(&d_in).zip(&dec.h) {
                *d += di * selu_grad_scalar(*hv);
            }
        }
        let (mut d_enc, dh_prev, dc_prev) =
            lstm_cell_backward(&params.lstm, params.cell_activation, &step.cell, &dh, &dc_next, &mut grads.lstm);
        if let Some(mask) = &step.enc_mask {
            d_enc.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
        }
        for (d, pre) in d_enc.iter_mut().zip(&step.enc_pre) {
            *d *= selu_grad_scalar(*pre);
        }
        params.encoder.backward(&step.x, &d_enc, &mut grads.encoder);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    Ok(grads)
}
