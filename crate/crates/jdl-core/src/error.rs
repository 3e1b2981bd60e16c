//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors produced by tensor I/O, the JPEG pipeline, and the trainer.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value was out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Tensor or plane dimensions do not match what an operation requires.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A loaded artifact or check failed validation.
    #[error("validation failed: {0}")]
    Validation(String),
    /// A binary payload did not conform to its format; `offset` is the
    /// absolute byte position the parser was looking at.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    /// A text artifact (quantization tables, dataset index) failed to parse.
    #[error("parse error in {what}: {reason}")]
    Parse { what: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error is the caller's fault (bad values, bad shapes)
    /// rather than a problem with the environment or an input file. The CLI
    /// maps validation errors to exit code 1 and everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::Validation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
