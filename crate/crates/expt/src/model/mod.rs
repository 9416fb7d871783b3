//! In-context inverse model: masked transformer encoder over episode tokens,
//! conditional-VAE head, pretraining loop, and checkpoint I/O.

pub mod checkpoint;
pub mod config;
pub mod expt;
pub mod pretrain;

pub use checkpoint::{
    crc64, load_entries, load_model_checkpoint, save_entries, save_model_checkpoint,
    CheckpointEntry, CheckpointError, LoadedCheckpoint,
};
pub use config::{EncoderConfig, ExPTConfig, VaeConfig};
pub use expt::{build_mask, ExPTModel, Y_STD_FLOOR};
pub use pretrain::{pretrain, PretrainOptions, PretrainReport, PretrainableModel};

use crate::nncore::tape::TapeError;
use crate::synthfn::SynthError;

/// Errors from model construction, training, and checkpointing.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training diverged at iteration {iteration} (generator seed {seed}): {detail}")]
    TrainingDiverged { iteration: u64, seed: u64, detail: String },
}
