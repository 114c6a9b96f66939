use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    /// Well-formed JSON that violates the schema; the message names the record.
    #[error("{0}")]
    Validation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] maskfuse_core::Error),
    #[error("dataset `{name}`: {source}")]
    Dataset {
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit status: 1 for bad inputs, 2 for bad configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Core(maskfuse_core::Error::Config(_)) => 2,
            Error::Dataset { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
