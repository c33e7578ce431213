//! Schedule algebra, sampling, noise and losses.

mod latent;
mod loss;
mod noise;
mod sampler;
mod schedule;

pub use latent::{LatentCodec, PixelCodec};
pub use loss::{
    grad_map, gradient_loss, gradient_loss_node, gradient_weight, total_loss, total_loss_node,
    LossWeights,
};
pub use noise::multires_noise;
pub use sampler::{
    ddim_sample, ddim_step, forward_diffuse, predict_eps_from_v, predict_z0_from_v, v_target,
};
pub use schedule::{
    make_schedule, DdimPlan, NoiseSchedule, ScheduleSpec, BETA_END, BETA_START,
    DEFAULT_SAMPLING_STEPS, DEFAULT_TRAIN_STEPS,
};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("timestep {t} outside 0..={max}")]
    Timestep { t: usize, max: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid eta: {0}")]
    Eta(String),
    #[error("noise: {0}")]
    Noise(String),
    #[error("loss: {0}")]
    Loss(String),
    #[error(transparent)]
    Nn(NnError),
}
