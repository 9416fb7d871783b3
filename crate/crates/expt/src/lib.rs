//! Few-shot black-box optimization by synthetic pretraining.
//!
//! The system pretrains an in-context transformer on functions drawn from
//! Gaussian-process priors over a pool of unlabeled designs, then adapts to a
//! real objective from a handful of labeled examples by conditioning on a
//! target value and generating candidate inputs — no gradient updates at
//! adaptation time. Forward-modeling and gradient-ascent baselines share the
//! same evaluation harness.
//!
//! Module map:
//! - [`nncore`]: tensors, reverse-mode tape, layers, AdamW.
//! - [`rng`]: deterministic per-purpose RNG stream derivation.
//! - [`synthfn`]: GP priors, random-MLP generators, episode sampling.
//! - [`model`]: the inverse (conditional-VAE) transformer and its training.
//! - [`baselines`]: forward transformer and gradient-ascent ensembles.
//! - [`eval`]: few-shot tasks, oracles, scoring protocol.
//! - [`pipeline`]: config, checkpoints, metrics, CLI commands.

pub mod baselines;
pub mod eval;
pub mod model;
pub mod nncore;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod synthfn;
