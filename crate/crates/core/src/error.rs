//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tape node produced a NaN or infinity during evaluation.
    #[error("numeric overflow: non-finite value at node {node} ({op})")]
    NumericOverflow { node: usize, op: &'static str },

    /// A program referenced rows or shapes that do not exist under the
    /// bound parameters.
    #[error("malformed program: {0}")]
    MalformedProgram(String),

    /// A vector was combined with, or requested over, an incompatible
    /// parameter support.
    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Interaction file could not be parsed.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The truncated Neumann series grew without bound.
    #[error("neumann series diverged (norm growth {growth:.3e}); use a smaller alpha")]
    NeumannDiverged { growth: f64 },

    /// A training step produced a non-finite update even after the
    /// learning-rate fallback.
    #[error("training step aborted: {0}")]
    StepAborted(String),

    #[error("run failed: {0}")]
    RunFailed(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
