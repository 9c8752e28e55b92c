use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configured size cap (states, policies, memo entries) was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// An internal invariant of the chain or the construction did not hold.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) => 2,
            Error::Resource(_) | Error::NotConverged { .. } => 3,
            _ => 1,
        }
    }
}
