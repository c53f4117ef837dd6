//! Dense-network substrate: batched layers with manual gradients, AdamW and
//! a versioned checkpoint format.

mod activation;
mod adamw;
pub mod checkpoint;
mod dense;
mod matrix;
mod params;

pub use activation::{sigmoid, softplus, Activation, LEAKY_SLOPE};
pub use adamw::{AdamW, AdamWConfig};
pub use dense::{Dense, DenseNet, DenseSpec, NetTape};
pub use matrix::{gemm, Matrix};
pub use params::{clip_grad_norm, join, Parameters, ParametersExt, Tensor, TensorSpec};
