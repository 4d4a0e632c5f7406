//! Reverse-mode automatic differentiation over dense 2D tensors: the small
//! set of operations the hair networks need (matrix multiply, elementwise
//! ops, softmax, layer normalization, attention and GRU building blocks,
//! MSE), recorded on a tape and differentiated in one reverse sweep.

mod tape;
mod tensor;

pub use tape::{gru_cell, linear, softmax_attention, GruWeights, Tape, TensorId};
pub use tensor::Tensor;

/// Element type: f32 by default, f64 under the `f64` feature for oracle runs.
#[cfg(feature = "f64")]
pub type Elem = f64;
#[cfg(not(feature = "f64"))]
pub type Elem = f32;

/// Errors from tape construction and the backward pass.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward requires a scalar loss")]
    NonScalarLoss,
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("gradient requested before backward")]
    NoGradients,
}

pub type Result<T> = std::result::Result<T, AdError>;
