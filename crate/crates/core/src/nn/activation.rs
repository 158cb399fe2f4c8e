use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

pub fn selu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_grad_scalar(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Logistic function; never evaluates `exp` of a positive argument.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn selu(x: &Tensor) -> Tensor {
    x.map(selu_scalar)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Nonlinearity used for the LSTM cell candidate and cell output. Gates are
/// always sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellActivation {
    #[default]
    Selu,
    Tanh,
}

impl CellActivation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Selu => selu_scalar(x),
            Self::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Selu => selu_grad_scalar(x),
            Self::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

impl std::str::FromStr for CellActivation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selu" => Ok(Self::Selu),
            "tanh" => Ok(Self::Tanh),
            other => Err(Error::InvalidArgument(format!("unknown cell activation {other:?}"))),
        }
    }
}

impl std::fmt::Display for CellActivation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Selu => "selu",
            Self::Tanh => "tanh",
        })
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} must lie in [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout in place; returns the per-element multiplier
/// (0 or `1/(1-rate)`), or `None` when nothing was dropped.
pub(crate) fn dropout_in_place<R: Rng + ?Sized>(x: &mut [f64], rate: f64, rng: &mut R) -> Option<Vec<f64>> {
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter_mut()
        .map(|v| {
            let m = if rng.gen::<f64>() < rate { 0.0 } else { keep };
            *v *= m;
            m
        })
        .collect();
    Some(mask)
}

/// Inverted dropout. Inference mode, or a zero rate, is the identity.
pub fn dropout_apply<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    check_rate(rate)?;
    let mut out = x.clone();
    let mask = if training { dropout_in_place(out.data_mut(), rate, rng) } else { None };
    Ok((out, mask))
}
