//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller violated a documented precondition (bad dimension, empty
    /// input, parameter out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Arithmetic produced non-finite values or an iteration diverged.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A model was asked for a derivative or operation it cannot provide.
    #[error("capability: {0}")]
    Capability(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed on-disk artifact (bad magic, truncated payload, ...).
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn contract(msg: impl Into<String>) -> Self {
        CoreError::Contract(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CoreError::Numerical(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        CoreError::Capability(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        CoreError::Format(msg.into())
    }
}
