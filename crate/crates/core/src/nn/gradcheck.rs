use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::CellActivation;
use super::model::{model_backward, model_forward, ModelConfig, ModelGrads, ModelParams};
use crate::error::Result;
use crate::tensor::Tensor;
use crate::train::mse_loss;
use crate::windowing::WindowBatch;

/// Denominator floor of the relative error, `|a - n| / max(|a|, |n|, floor)`.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: &'static str,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn loss_at(params: &ModelParams, batch: &WindowBatch) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (pred, _) = model_forward(params, batch, false, &mut rng)?;
    Ok(mse_loss(&pred, &batch.targets)?.0)
}

/// Compares the given gradients of the MSE loss with central differences
/// taken at `step`, over every parameter. Dropout is switched off.
pub fn compare_gradients(
    params: &ModelParams,
    batch: &WindowBatch,
    step: f64,
    analytic: &ModelGrads,
) -> Result<GradCheckReport> {
    let mut probe = params.clone();
    probe.dropout_rate = 0.0;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: "",
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let names = analytic.tensors().map(|(n, _)| n);
    for (ti, name) in names.iter().enumerate() {
        let len = analytic.tensors()[ti].1.len();
        for i in 0..len {
            let orig = probe.tensors()[ti].1[i];
            probe.tensors_mut()[ti][i] = orig + step;
            let up = loss_at(&probe, batch)?;
            probe.tensors_mut()[ti][i] = orig - step;
            let down = loss_at(&probe, batch)?;
            probe.tensors_mut()[ti][i] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic.tensors()[ti].1[i];
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            let err = (a - numeric).abs() / denom;
            report.checked += 1;
            if err > report.max_rel_error || report.worst_tensor.is_empty() {
                report = GradCheckReport {
                    max_rel_error: err,
                    worst_tensor: name,
                    worst_index: i,
                    analytic: a,
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}

/// Analytic gradient of the MSE loss versus central finite differences.
pub fn grad_check(params: &ModelParams, batch: &WindowBatch, step: f64) -> Result<GradCheckReport> {
    let mut p = params.clone();
    p.dropout_rate = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (pred, cache) = model_forward(&p, batch, false, &mut rng)?;
    let (_, grad_out) = mse_loss(&pred, &batch.targets)?;
    let analytic = model_backward(&p, &cache, &grad_out)?;
    compare_gradients(&p, batch, step, &analytic)
}

/// Random small model and batch (context ≤ 5, hidden ≤ 8, batch ≤ 4,
/// dropout off) for gradient checks.
pub fn random_tiny_problem(seed: u64) -> (ModelParams, WindowBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bsz = rng.gen_range(1..=4);
    let context = rng.gen_range(1..=5);
    let horizon = rng.gen_range(1..=2);
    let n_known = rng.gen_range(0..=3);
    let n_obs = rng.gen_range(1..=3);
    let n_target = rng.gen_range(1..=3);
    let config = ModelConfig {
        hidden_size: rng.gen_range(1..=8),
        encoder_width: rng.gen_range(1..=6),
        dropout_rate: 0.0,
        cell_activation: CellActivation::Selu,
    };
    let mut params = ModelParams::init(n_known, n_obs, n_target, &config, rng.gen()).expect("valid tiny config");
    for b in params.tensors_mut().into_iter().skip(1).step_by(3) {
        b.iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
    }
    params.encoder.bias.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));

    let mut uniform = |shape: Vec<usize>, lo: f64, hi: f64| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("sized")
    };
    let batch = WindowBatch {
        known_past: uniform(vec![bsz, context, n_known], -1.0, 1.0),
        known_future: uniform(vec![bsz, horizon, n_known], -1.0, 1.0),
        observed_past: uniform(vec![bsz, context, n_obs], -1.0, 1.0),
        targets: uniform(vec![bsz, horizon, n_target], 0.0, 1.0),
        catchment_ids: (0..bsz).map(|b| format!("tiny{b}")).collect(),
        starts: vec![0; bsz],
    };
    (params, batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correct_gradients_pass() {
        for seed in 0..5 {
            let (p, b) = random_tiny_problem(seed);
            let r = grad_check(&p, &b, 1e-5).unwrap();
            assert!(r.max_rel_error <= 1e-5, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn tanh_variant_passes() {
        let (mut p, b) = random_tiny_problem(100);
        p.cell_activation = CellActivation::Tanh;
        let r = grad_check(&p, &b, 1e-5).unwrap();
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
    }

    #[test]
    fn corrupted_forget_gate_is_caught() {
        let (p, b) = random_tiny_problem(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (pred, cache) = model_forward(&p, &b, false, &mut rng).unwrap();
        let (_, g) = mse_loss(&pred, &b.targets).unwrap();
        let mut grads = model_backward(&p, &cache, &g).unwrap();
        let h = p.hidden_size();
        for v in &mut grads.lstm.bias[h..2 * h] {
            *v = *v * 1.5 + 1e-3;
        }
        let r = compare_gradients(&p, &b, 1e-5, &grads).unwrap();
        assert!(r.max_rel_error > 1e-2, "{r:?}");
        assert_eq!(r.worst_tensor, "lstm.bias");
    }

    #[test]
    fn flat_direction_does_not_divide_by_zero() {
        // a known-input weight column multiplying all-zero inputs has zero
        // gradient both analytically and numerically
        let (mut p, mut b) = random_tiny_problem(12);
        if p.n_known == 0 {
            (p, b) = random_tiny_problem(13);
        }
        assert!(p.n_known > 0);
        b.known_past.data_mut().iter_mut().for_each(|v| *v = 0.0);
        b.known_future.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let r = grad_check(&p, &b, 1e-5).unwrap();
        assert!(r.max_rel_error.is_finite());
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
    }
}
