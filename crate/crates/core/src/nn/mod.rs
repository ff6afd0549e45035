//! Neural-network kernels: layers with exact forward/backward passes, loss, optimizers
//! and a finite-difference gradient checker.

mod activation;
mod conv;
mod dense;
pub mod gradcheck;
mod init;
mod loss;
mod network;
mod optim;
mod pool;

pub use activation::{relu_backward, relu_forward, softmax, softmax_backward, Dropout, Mode};
pub use conv::{Conv1d, ConvGrads};
pub use dense::{Dense, DenseGrads};
pub use gradcheck::{grad_check, CheckLoss, GradCheckOptions, GradCheckReport};
pub use init::he_uniform;
pub use loss::{cross_entropy, softmax_cross_entropy, BatchLoss};
pub use network::{Layer, Network, ParamSlot};
pub use optim::{Optimizer, OptimizerKind};
pub use pool::MaxPool1d;
