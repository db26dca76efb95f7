//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DgmError {
    /// Incompatible array or matrix shapes; carries both shapes.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    /// A NaN or infinity showed up where only finite values are valid.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Invalid configuration (unknown activation, bad learning rate, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Point outside the domain it was claimed to be in.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation that needs at least one sample got none.
    #[error("empty batch: {0}")]
    EmptyBatch(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (dataset CSV, checkpoint, ...).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, DgmError>;

impl DgmError {
    pub(crate) fn shape(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        DgmError::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }
}
