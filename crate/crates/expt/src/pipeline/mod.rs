//! Experiment orchestration: configuration, the command implementations
//! behind the CLI, and the metrics ledger.
//!
//! Every failure maps to one of three classes so the binary can exit with a
//! stable code: configuration mistakes (2), numeric failures such as
//! divergence or out-of-box candidates (3), and I/O or artifact corruption
//! (4).

pub mod config;
pub mod metrics;
pub mod runner;

pub use config::{
    desk_micro, load_config, parse_config, AdaptSection, FewShotSection, GeneratorSection,
    MethodName, ModelKind, ModelSection, OracleSection, PretrainSection, RunConfig,
    SurrogateSection, SweepSection,
};
pub use metrics::{
    emit_metrics, format_mean_std, read_metrics, summarize_rows, MetricsRow, METRICS_HEADER,
};
pub use runner::{
    checkpoint_path, cmd_adapt, cmd_pretrain, cmd_report, cmd_sweep, AdaptationMode,
};

use crate::eval::EvalError;
use crate::model::{CheckpointError, ModelError};
use crate::nncore::tape::TapeError;
use crate::synthfn::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Numeric(_) => 3,
            PipelineError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

impl From<TapeError> for PipelineError {
    fn from(e: TapeError) -> Self {
        PipelineError::Numeric(e.to_string())
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_)
            | SynthError::EmptyPool
            | SynthError::SubsampleTooSmall { .. } => PipelineError::Config(e.to_string()),
            SynthError::Csv(_) => PipelineError::Io(e.to_string()),
            SynthError::NonFiniteInput { .. } | SynthError::DegenerateKernel { .. } => {
                PipelineError::Numeric(e.to_string())
            }
        }
    }
}

impl From<CheckpointError> for PipelineError {
    fn from(e: CheckpointError) -> Self {
        // Corrupt or mismatched artifacts are file problems, not math.
        PipelineError::Io(e.to_string())
    }
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) => PipelineError::Config(e.to_string()),
            ModelError::TrainingDiverged { .. } => PipelineError::Numeric(e.to_string()),
            ModelError::Tape(t) => t.into(),
            ModelError::Synth(s) => s.into(),
            ModelError::Checkpoint(c) => c.into(),
        }
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptySource
            | EvalError::InvalidSelection(_)
            | EvalError::InsufficientEligible { .. }
            | EvalError::InvalidOracle(_)
            | EvalError::NoCandidates
            | EvalError::Table(_) => PipelineError::Config(e.to_string()),
            EvalError::OutOfBox { .. } | EvalError::DegenerateRange => {
                PipelineError::Numeric(e.to_string())
            }
            EvalError::Synth(s) => s.into(),
            EvalError::Model(m) => m.into(),
            EvalError::Io(io) => io.into(),
        }
    }
}
