//! Hydrological forecasting with an encoder-LSTM over CAMELS-style catchment
//! panels, with positional and seasonal input encodings.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod encodings;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod viz;
pub mod windowing;

pub use error::{Error, Result};
