use std::path::PathBuf;

/// Errors produced anywhere in the navigation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("position outside field grid: {0}")]
    OutOfDomain(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("heading policy failure: {0}")]
    Policy(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
