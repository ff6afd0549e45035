//! Stress classification from windowed heart-rate, heart-rate-variability and
//! electrodermal-activity streams with a small 1D CNN, plus per-user personalisation by
//! swapping and fine-tuning the network head.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
mod io_util;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};
pub use tensor::Tensor;
