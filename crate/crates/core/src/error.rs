use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LdeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("internal consistency violated: {0}")]
    InternalConsistency(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = LdeError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> LdeError {
    LdeError::InvalidArgument(msg.into())
}
