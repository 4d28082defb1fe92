//! Error type shared across the toolkit.
//!
//! Errors are split into validation failures (bad shapes, bad inputs, bad
//! files) and numerical failures (divergence, non-finite intermediates).
//! The CLI maps the former to exit code 2 and the latter to exit code 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Array shapes or lengths do not match the operation contract.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An input value or configuration is outside the supported domain.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A computation produced non-finite values or failed to converge.
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// A file or stream does not conform to the expected format.
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Process exit code for the CLI: 2 for validation, 3 for numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
