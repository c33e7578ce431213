//! Object detection as conditional image generation.
//!
//! Detections are painted onto the input image as class-colored, shrunk boxes
//! with red center dots; a conditional denoising diffusion model learns to
//! generate those annotation images; a feature-differencing decoder turns
//! generated images back into scored boxes.

pub mod codec;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod postproc;
