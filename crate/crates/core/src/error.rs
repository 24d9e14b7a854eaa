use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of an edit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The region would be empty. Callers may treat this as a warning.
    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("mask has no set pixels")]
    NoRegion,

    #[error("training diverged at step {step}: loss = {loss}")]
    TrainingDiverged { step: u64, loss: f64 },

    /// Non-retryable protocol violation by a peer.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Connection failures, timeouts and 5xx responses. Retryable.
    #[error("transport error: {0}")]
    Transport(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// Wrong magic bytes or an unsupported format version.
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("job cancelled at step {0}")]
    Cancelled(u64),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Whether a remote call failing with this error may be retried.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
