//! Dense tensors, the differentiable layers the denoiser is built from, and Adam.

mod checkpoint;
mod conv;
mod embedding;
mod graph;
mod param;
mod tensor;

#[cfg(test)]
mod gradcheck;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, TensorEntry, CHECKPOINT_MAGIC,
};
pub use conv::{conv2d, conv2d_backward};
pub use embedding::sinusoidal_embedding;
pub use graph::{grad_eval, Gradients, Graph, Var, GROUP_NORM_EPS};
pub use param::{adam_step, AdamConfig, Param, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
