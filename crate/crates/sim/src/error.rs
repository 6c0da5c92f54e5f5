//! Error types for scene generation, rendering, and evaluation.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// No feasible structure found within the resampling budget (for
    /// example, objects too large for the requested scale).
    #[error("infeasible structure spec after {attempts} attempts: {reason}")]
    InfeasibleSpec { attempts: usize, reason: String },

    /// An object's partial cloud fell below the minimum visible point count.
    #[error("object {object} fully occluded ({visible} visible points)")]
    FullyOccluded { object: usize, visible: usize },

    /// Success-rate aggregation over an empty group.
    #[error("empty outcome group: {0}")]
    EmptyGroup(String),

    /// Semantic checks received a structure shape they do not know.
    #[error("unknown structure shape: {0}")]
    UnknownShape(String),

    /// Record or manifest parsing failure.
    #[error("corrupt record {path}: {message}")]
    CorruptRecord { path: String, message: String },

    /// Record schema version unsupported.
    #[error("record schema version {found} unsupported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Core(#[from] structdiff_core::CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type SimResult<T> = Result<T, SimError>;
