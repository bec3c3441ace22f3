//! Error type shared across the crate.
//!
//! A single enum keeps call sites uniform; [`Error::class`] buckets the
//! variants into the coarse categories the CLI maps to exit codes.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse category of an error, used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid configuration or arguments.
    Config,
    /// Missing, malformed, or forbidden data access.
    Data,
    /// Training left the finite regime or failed to make progress.
    Divergence,
    /// Anything else (bugs, I/O on report files, serialization).
    Internal,
}

/// All failure modes of the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for an operation.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// An operation produced NaN or infinite values.
    #[error("non-finite values produced by {op}")]
    NonFinite { op: &'static str },

    /// A configuration value violates its documented precondition.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Data files are missing, malformed, or fail verification.
    #[error("data error: {0}")]
    Data(String),

    /// Test-set access was attempted while model selection was running.
    #[error("test set is sealed during training and hyperparameter search: {0}")]
    TestSetSealed(String),

    /// Training loss blew up or stopped being finite.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// A parameter gradient contained NaN or infinite entries.
    #[error("non-finite gradient for parameter {name} at optimizer step {step}")]
    NonFiniteGradient { name: String, step: u64 },

    /// Two evaluations of the same loss closure disagreed bitwise.
    #[error("loss closure is not deterministic; gradient check requires bitwise-repeatable forward passes")]
    NonDeterministic,

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Bucket this error for exit-code purposes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Data(_) | Error::TestSetSealed(_) => ErrorClass::Data,
            Error::Divergence(_) | Error::NonFiniteGradient { .. } => ErrorClass::Divergence,
            _ => ErrorClass::Internal,
        }
    }
}
