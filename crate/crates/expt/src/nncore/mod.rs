//! Differentiable-computation substrate: 2-D tensors, a reverse-mode tape,
//! the layer primitives the models need (masked attention, pre-norm
//! transformer blocks, MLPs, VAE helpers), finite-difference verification,
//! and AdamW with a warmup–cosine schedule.
//!
//! Everything is generic over [`tensor::Real`] (f32 for training, f64 for
//! gradient verification). There is no implicit global state: parameters
//! live in a [`layers::ParamRegistry`], randomness comes in as explicit RNG
//! streams, and a forward pass is a pure function of (inputs, parameters,
//! stream).

pub mod gradcheck;
pub mod layers;
pub mod mask;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use layers::{ParamId, ParamRegistry};
pub use mask::AttentionMask;
pub use optim::{adamw_step, lr_at, AdamHyper, LrSchedule, OptimizerState};
pub use tape::{NodeId, Tape};
pub use tensor::{Real, Tensor};
