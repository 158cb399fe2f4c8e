//! Dense encoder → LSTM → dense decoder network with exact backpropagation
//! through time.

mod activation;
mod gradcheck;
mod lstm;
mod model;

pub use activation::{
    dropout_apply, selu, selu_grad_scalar, selu_scalar, sigmoid, sigmoid_scalar, CellActivation, SELU_ALPHA,
    SELU_LAMBDA,
};
pub use gradcheck::{compare_gradients, grad_check, random_tiny_problem, GradCheckReport, GRAD_CHECK_FLOOR};
pub use lstm::{lstm_cell_backward, lstm_cell_forward, CellCache, LstmParams};
pub use model::{model_backward, model_forward, DenseParams, ForwardCache, ModelConfig, ModelGrads, ModelParams};
