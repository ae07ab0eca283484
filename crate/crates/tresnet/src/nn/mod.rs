//! Dense-tensor network primitives with hand-derived gradients.
//!
//! Activations are (batch, time, channels) row-major in double precision.
//! Every layer exposes an explicit forward and an exact analytic backward;
//! there is no autodiff graph.

mod activations;
mod batchnorm;
mod conv;
mod dense;
pub mod gradcheck;
mod pool;
mod residual;
mod tensor;

pub use activations::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use batchnorm::{BatchNorm1d, BnCache, BnGrads, BN_DEFAULT_EPSILON, BN_DEFAULT_MOMENTUM};
pub use conv::{Conv1d, ConvGrads};
pub use dense::{Dense, DenseGrads};
pub use pool::{avg_pool_time, avg_pool_time_backward};
pub use residual::{ResidualBlock, ResidualCache, ResidualGrads};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("batch norm needs at least 2 values per channel, got {0}")]
    BatchTooSmall(usize),

    #[error("{0}")]
    BadArgument(String),
}
