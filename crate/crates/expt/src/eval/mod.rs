//! Scoring protocol: oracles, few-shot selection, and adaptation runs.

pub mod few_shot;
pub mod oracle;
pub mod report;

pub use few_shot::{make_few_shot, FewShotDataset, FewShotProvenance, SelectionMode};
pub use oracle::{Oracle, OracleMeta};
pub use report::{
    evaluate_candidates, run_adaptation, run_sequential, AdaptMethod, EvalReport, ReportMeta,
    DEFAULT_Q,
};

use crate::model::ModelError;
use crate::synthfn::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("source dataset is empty")]
    EmptySource,
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("only {eligible} points are eligible, {requested} requested")]
    InsufficientEligible { eligible: usize, requested: usize },
    #[error("candidate {row} coordinate {coord} = {value} is outside the box [{lo}, {hi}]")]
    OutOfBox { row: usize, coord: usize, value: f64, lo: f64, hi: f64 },
    #[error("value range is degenerate (y_max = y_min)")]
    DegenerateRange,
    #[error("invalid oracle: {0}")]
    InvalidOracle(String),
    #[error("no candidates to score")]
    NoCandidates,
    #[error("bad table file: {0}")]
    Table(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
