//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix shapes do not line up for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller violated an operation's contract (empty input, non-scalar
    /// backward root, negative capacity, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Malformed input document; carries a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An index referenced something outside the declared domain.
    #[error("range error: {0}")]
    Range(String),

    /// Time series that must share a clock do not.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A categorical value was not found in the declared vocabulary.
    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    /// Not enough time steps to cut even one window.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A requested split would leave some partition empty.
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    /// A forward operation produced NaN or Inf from finite inputs.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training diverged (NaN validation loss).
    #[error("divergence: {0}")]
    Divergence(String),

    /// File content does not match the declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
