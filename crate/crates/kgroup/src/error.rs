use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("{0}")]
    Config(String),
    #[error("unknown {kind} '{name}'")]
    UnknownName { kind: &'static str, name: String },
    #[error(transparent)]
    Core(#[from] kgroup_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Core(kgroup_core::Error::Config(_)) => 1,
            Error::Core(kgroup_core::Error::Numerical(_)) => 3,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Checkpoint { .. }
            | Error::Incompatible(_)
            | Error::UnknownName { .. }
            | Error::Core(_) => 2,
        }
    }
}
