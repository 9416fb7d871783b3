//! Synthetic function families and episode sampling.
//!
//! Functions come from two priors: zero-mean Gaussian processes over a menu
//! of kernels ([`kernel`], sampled exactly at episode scale via [`gp`], and
//! as evaluate-anywhere random-feature draws via [`spectral`]), and randomly
//! initialized MLPs ([`mlp`]). [`episode`] turns one function draw into a
//! context/target split; [`pool`] reads and writes design-pool CSV files.

pub mod episode;
pub mod gp;
pub mod kernel;
pub mod mlp;
pub mod pool;
pub mod spectral;

pub use episode::{
    draw_episode, sample_generator, sample_inputs, subsample_pool, Episode, GeneratorConfig,
    GeneratorFamily, GeneratorKind, InputSource, SplitMode,
};
pub use gp::sample_gp_values;
pub use kernel::{kernel_matrix, KernelKind, KernelSpec};
pub use mlp::{mlp_function_values, InitMethod, MlpGeneratorSpec};
pub use spectral::FunctionDraw;

/// Failures in synthetic-function generation.
#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("non-finite input at row {row}")]
    NonFiniteInput { row: usize },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("kernel matrix not factorizable after jitter {final_jitter:.3e}")]
    DegenerateKernel { final_jitter: f64 },
    #[error("pool has no rows")]
    EmptyPool,
    #[error("subsample ratio {ratio} of a {rows}-row pool keeps no rows")]
    SubsampleTooSmall { ratio: f64, rows: usize },
    #[error("pool file error: {0}")]
    Csv(#[from] csv::Error),
}
