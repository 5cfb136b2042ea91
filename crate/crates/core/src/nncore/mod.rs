//! Dense linear algebra, activations, the LSTM unit, and SGD.

pub mod activations;
pub mod lstm;
mod matrix;
pub mod optim;
mod rng;
mod scalar;

pub use activations::{log_softmax, sigmoid, softmax, tanh_act};
pub use lstm::{GateParams, LstmParams, LstmState, StepCache, StepGrads};
pub use matrix::{Matrix, ParamTensor};
pub use optim::{Sgd, SgdConfig};
pub use rng::{init_uniform, Rng};
pub use scalar::Scalar;
