//! Error types shared across the core modules.

use thiserror::Error;

/// Errors produced by the geometry, autodiff, encoder, diffusion, and
/// discriminator modules.
#[derive(Debug, Error)]
pub enum CoreError {
    /// The 6D rotation basis is degenerate: `a` is (near-)zero or `b` is
    /// (near-)parallel to `a`. Callers decide the fallback; the planner
    /// discards such samples.
    #[error("degenerate 6d rotation basis: {0}")]
    DegenerateBasis(String),

    /// An operation that requires at least one point received an empty cloud.
    #[error("empty point cloud")]
    EmptyCloud,

    /// Tensor shapes do not line up for a graph operation.
    #[error("shape mismatch at node {node}: {message}")]
    ShapeMismatch { node: usize, message: String },

    /// `backward` was asked to differentiate a non-scalar node.
    #[error("backward target at node {0} is not a scalar")]
    NotScalarLoss(usize),

    /// A token is not contained in the vocabulary.
    #[error("unknown token: {0}")]
    UnknownToken(String),

    /// Token sequence exceeds the configured maximum lengths.
    #[error("sequence too long: {0}")]
    SequenceTooLong(String),

    /// A scene with zero objects has nothing to rearrange.
    #[error("scene has no objects")]
    EmptyScene,

    /// A lookup index is out of the table's range.
    #[error("index {index} out of range for {what} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// Noise schedule parameters violate `0 < beta_1 <= beta_T < 1` or `T >= 1`.
    #[error("invalid schedule range: {0}")]
    InvalidRange(String),

    /// Every sample in a batch failed rotation conversion.
    #[error("all {0} samples had degenerate rotation bases")]
    AllSamplesDegenerate(usize),

    /// Checkpoint file is malformed or fails its checksum.
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    /// Checkpoint schema version is not supported.
    #[error("checkpoint schema version {found} unsupported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type CoreResult<T> = Result<T, CoreError>;
