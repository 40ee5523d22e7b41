use std::io;

use thiserror::Error;

use crate::trajectory::Axis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("ragged batch: trajectory {traj} has {len} steps, expected {expected}")]
    RaggedBatch { traj: usize, len: usize, expected: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: requested {requested}, available {available}")]
    Range { requested: usize, available: usize },

    #[error("degenerate axis {0}: zero variance")]
    DegenerateAxis(Axis),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at step {step}: objective = {value}")]
    Divergence { step: usize, value: f64 },

    #[error("checkpoint error at `{path}`: {msg}")]
    Checkpoint { path: String, msg: String },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
}
