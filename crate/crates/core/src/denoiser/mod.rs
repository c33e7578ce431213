//! The conditional denoiser, its training step and annotation sampling.

mod train;
mod unet;

use serde::{Deserialize, Serialize};

pub use train::{
    generate, generate_annotation, train, train_step, StepRecord, TrainConfig, VPredictor,
};
pub use unet::{UNet, UNetConfig};

use crate::diffusion::DiffusionError;
use crate::nn::NnError;

/// Which image the model is asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskPrompt {
    /// `p_x`: reproduce the input image.
    #[serde(rename = "x")]
    ReconstructX,
    /// `p_y`: produce the annotation image.
    #[serde(rename = "y")]
    GenerateY,
}

impl TaskPrompt {
    pub fn id(self) -> usize {
        match self {
            TaskPrompt::ReconstructX => 0,
            TaskPrompt::GenerateY => 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DenoiserError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at step {step} (t = {t})")]
    NonFinite { step: usize, t: usize, what: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Diffusion(DiffusionError),
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NnError> for DenoiserError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Shape(s) => DenoiserError::Shape(s),
            NnError::Io(e) => DenoiserError::Io(e),
            other => DenoiserError::Nn(other),
        }
    }
}

impl From<DiffusionError> for DenoiserError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::Shape(s) => DenoiserError::Shape(s),
            DiffusionError::Nn(e) => e.into(),
            other => DenoiserError::Diffusion(other),
        }
    }
}
