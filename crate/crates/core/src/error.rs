use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: no counterpart found in {expected_dir}")]
    MissingCounterpart { path: PathBuf, expected_dir: PathBuf },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("non-finite value in loss component `{component}` at step {step}")]
    NonFinite { component: &'static str, step: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
