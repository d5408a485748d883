//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

/// Errors produced by the separation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("empty audio")]
    EmptyAudio,

    #[error("audio has {samples} samples, shorter than one frame of {frame}")]
    AudioTooShort { samples: usize, frame: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },

    #[error("non-finite training loss at epoch {epoch}, batch {batch} (mse={mse}, kl={kl})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        mse: f64,
        kl: f64,
    },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("stale forward trace: {0}")]
    StaleTrace(String),
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
