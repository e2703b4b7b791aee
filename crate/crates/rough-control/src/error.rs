//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, solvers and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    /// Rejected input: bad grid, bad dimensions, bad parameters.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two objects that must share a grid (or dimensions) do not.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// An evaluator or a recursion produced a non-finite number.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration document failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    /// Output files could not be written.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn mismatch(msg: impl Into<String>) -> Self {
        Error::Mismatch(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
