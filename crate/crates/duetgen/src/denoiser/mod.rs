//! Trainable denoising network and its building blocks.
//!
//! [`params`] holds the named-tensor parameter store shared by values,
//! gradients, and optimizer state; [`layers`] provides the differentiable
//! primitives (linear maps, layer norm, attention, activations); [`model`]
//! assembles them into the two-stream transformer used by the diffusion
//! sampler and trainer.

pub mod layers;
pub mod model;
pub mod params;

pub use model::{Denoiser, DenoiserConfig, DenoiserMode, DenoiserOutput, ForwardCache};
pub use params::{ParamId, ParamSet, Tensor};
