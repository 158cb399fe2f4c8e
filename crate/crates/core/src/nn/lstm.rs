use rand::Rng;

use super::activation::{sigmoid_scalar, CellActivation};
use crate::error::{Error, Result};
use crate::tensor::{matmul_w_acc, matmul_wt_acc, outer_acc};

/// LSTM weights with gate blocks stacked in the order
/// (input, forget, cell candidate, output).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `[4H × input_size]`
    pub input_weights: Vec<f64>,
    /// `[4H × H]`
    pub recurrent_weights: Vec<f64>,
    /// `[4H]`
    pub bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let g = 4 * hidden_size;
        Self {
            input_size,
            hidden_size,
            input_weights: vec![0.0; g * input_size],
            recurrent_weights: vec![0.0; g * hidden_size],
            bias: vec![0.0; g],
        }
    }

    /// Fan-based uniform weights, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        let g = 4 * hidden_size;
        let lim_x = (6.0 / (input_size + g) as f64).sqrt();
        let lim_h = (6.0 / (hidden_size + g) as f64).sqrt();
        p.input_weights.iter_mut().for_each(|w| *w = rng.gen_range(-lim_x..=lim_x));
        p.recurrent_weights.iter_mut().for_each(|w| *w = rng.gen_range(-lim_h..=lim_h));
        p.bias[hidden_size..2 * hidden_size].fill(1.0);
        p
    }
}

/// Activations of one cell step kept for the backward pass. All `[B × H]`
/// except `x` (`[B × input_size]`).
#[derive(Debug, Clone)]
pub struct CellCache {
    pub batch: usize,
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g_pre: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub c_act: Vec<f64>,
}

/// One LSTM step over a batch:
/// `c = f⊙c_prev + i⊙act(z_g)`, `h = o⊙act(c)` with sigmoid gates.
pub fn lstm_cell_forward(
    p: &LstmParams,
    act: CellActivation,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let hs = p.hidden_size;
    if hs == 0 {
        return Err(Error::Shape("LSTM hidden size is zero".into()));
    }
    let batch = h_prev.len() / hs;
    if x.len() != batch * p.input_size || h_prev.len() != batch * hs || c_prev.len() != batch * hs {
        return Err(Error::Shape(format!(
            "LSTM step expects x [{batch}×{}] and states [{batch}×{hs}], got {} / {} / {}",
            p.input_size,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let g4 = 4 * hs;
    let mut z = vec![0.0; batch * g4];
    for b in 0..batch {
        z[b * g4..(b + 1) * g4].copy_from_slice(&p.bias);
    }
    matmul_wt_acc(x, &p.input_weights, p.input_size, g4, &mut z);
    matmul_wt_acc(h_prev, &p.recurrent_weights, hs, g4, &mut z);

    let n = batch * hs;
    let (mut i, mut f, mut g_pre, mut g, mut o) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut c, mut c_act, mut h) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for b in 0..batch {
        let zr = &z[b * g4..(b + 1) * g4];
        for k in 0..hs {
            let j = b * hs + k;
            i[j] = sigmoid_scalar(zr[k]);
            f[j] = sigmoid_scalar(zr[hs + k]);
            g_pre[j] = zr[2 * hs + k];
            g[j] = act.apply(g_pre[j]);
            o[j] = sigmoid_scalar(zr[3 * hs + k]);
            c[j] = f[j] * c_prev[j] + i[j] * g[j];
            c_act[j] = act.apply(c[j]);
            h[j] = o[j] * c_act[j];
        }
    }
    if let Some(bad) = h.iter().chain(&c).find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("LSTM state became {bad}")));
    }
    let cache = CellCache {
        batch,
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g_pre,
        g,
        o,
        c: c.clone(),
        c_act,
    };
    Ok((h, c, cache))
}

/// Backward of one step. `dh` is the total gradient reaching `h_t`, `dc` the
/// gradient reaching `c_t` from the next step. Accumulates parameter
/// gradients into `grads` and returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    p: &LstmParams,
    act: CellActivation,
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hs = p.hidden_size;
    let g4 = 4 * hs;
    let batch = cache.batch;
    let mut dz = vec![0.0; batch * g4];
    let mut dc_prev = vec![0.0; batch * hs];
    for b in 0..batch {
        for k in 0..hs {
            let j = b * hs + k;
            let d_o = dh[j] * cache.c_act[j];
            let dct = dc[j] + dh[j] * cache.o[j] * act.derivative(cache.c[j]);
            let di = dct * cache.g[j];
            let dg = dct * cache.i[j];
            let df = dct * cache.c_prev[j];
            dc_prev[j] = dct * cache.f[j];
            let zr = &mut dz[b * g4..(b + 1) * g4];
            zr[k] = di * cache.i[j] * (1.0 - cache.i[j]);
            zr[hs + k] = df * cache.f[j] * (1.0 - cache.f[j]);
            zr[2 * hs + k] = dg * act.derivative(cache.g_pre[j]);
            zr[3 * hs + k] = d_o * cache.o[j] * (1.0 - cache.o[j]);
        }
    }
    outer_acc(&dz, &cache.x, p.input_size, g4, &mut grads.input_weights);
    outer_acc(&dz, &cache.h_prev, hs, g4, &mut grads.recurrent_weights);
    for b in 0..batch {
        for (gb, d) in grads.bias.iter_mut().zip(&dz[b * g4..(b + 1) * g4]) {
            *gb += d;
        }
    }
    let mut dx = vec![0.0; batch * p.input_size];
    matmul_w_acc(&dz, &p.input_weights, p.input_size, g4, &mut dx);
    let mut dh_prev = vec![0.0; batch * hs];
    matmul_w_acc(&dz, &p.recurrent_weights, hs, g4, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fixed_point() {
        let p = LstmParams::zeros(3, 2);
        let (h, c, cache) = lstm_cell_forward(&p, CellActivation::Selu, &[0.0; 3], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
        assert!(cache.i.iter().chain(&cache.f).chain(&cache.o).all(|g| *g == 0.5));
    }

    #[test]
    fn single_unit_by_hand() {
        // one input, one hidden unit
        let p = LstmParams {
            input_size: 1,
            hidden_size: 1,
            input_weights: vec![0.5, -0.3, 0.8, 0.1],
            recurrent_weights: vec![0.2, 0.4, -0.6, 0.7],
            bias: vec![0.1, 1.0, -0.2, 0.05],
        };
        let (x, h0, c0) = (0.9, -0.4, 0.3);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let selu = |v: f64| {
            let (l, a) = (1.0507009873554805, 1.6732632423543772);
            if v > 0.0 { l * v } else { l * a * (v.exp() - 1.0) }
        };
        let i = sig(0.5 * x + 0.2 * h0 + 0.1);
        let f = sig(-0.3 * x + 0.4 * h0 + 1.0);
        let g = selu(0.8 * x - 0.6 * h0 - 0.2);
        let o = sig(0.1 * x + 0.7 * h0 + 0.05);
        let c = f * c0 + i * g;
        let h = o * selu(c);
        let (h1, c1, _) = lstm_cell_forward(&p, CellActivation::Selu, &[x], &[h0], &[c0]).unwrap();
        assert!((h1[0] - h).abs() < 1e-12);
        assert!((c1[0] - c).abs() < 1e-12);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut p = LstmParams::zeros(2, 3);
        // forget gate saturated open, input gate saturated closed
        p.bias[3..6].fill(40.0);
        p.bias[0..3].fill(-40.0);
        let c_prev = [0.7, -1.2, 2.5];
        let (_, c, _) = lstm_cell_forward(&p, CellActivation::Selu, &[1.0, -1.0], &[0.1, 0.2, 0.3], &c_prev).unwrap();
        for (a, b) in c.iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = LstmParams::zeros(3, 2);
        assert!(matches!(
            lstm_cell_forward(&p, CellActivation::Selu, &[0.0; 2], &[0.0; 2], &[0.0; 2]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn exploding_state_detected() {
        let mut p = LstmParams::zeros(1, 1);
        p.input_weights = vec![0.0, 0.0, 1e308, 0.0];
        p.bias = vec![50.0, 50.0, 0.0, 50.0];
        let r = lstm_cell_forward(&p, CellActivation::Selu, &[10.0], &[0.0], &[1e308]);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
