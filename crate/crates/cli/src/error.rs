use std::io;
use std::path::PathBuf;

use lde_core::LdeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] LdeError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    CheckFailed(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 0 success, 1 usage, 2 numeric failure, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::CheckFailed(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                LdeError::InvalidArgument(_) => 1,
                LdeError::NumericFailure(_) | LdeError::InternalConsistency(_) => 2,
                LdeError::Parse(_) | LdeError::Io(_) | LdeError::Csv(_) => 3,
            },
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> CliResult<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> CliResult<T> {
        self.map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })
    }
}
