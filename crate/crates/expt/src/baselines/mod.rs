//! Comparison methods: a forward-modeling transformer trained on the same
//! episode stream, and from-scratch surrogate ensembles climbed by gradient
//! ascent. Both share the candidate-seeding rule in [`top_q_init`].

pub mod surrogate;
pub mod tnp_ed;

pub use surrogate::{
    ascend_with, grad_ascent_optimize, surrogate_train, ReduceMode, SurrogateConfig,
    SurrogateEnsemble, SurrogateTrainReport, TARGET_STD_FLOOR,
};
pub use tnp_ed::{tnp_ed_optimize, top_q_init, TnpEdModel};
