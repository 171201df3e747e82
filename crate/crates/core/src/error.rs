use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Verification,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("backward called on a tensor of shape {0:?}; expected a scalar")]
    NonScalarBackward(Vec<usize>),
    #[error("gradient of a leaf is already populated; reset gradients before calling backward again")]
    GradNotReset,
    #[error("block size {block} does not fit a {height}x{width} feature map")]
    BlockTooLarge {
        block: usize,
        height: usize,
        width: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("checkpoint architecture mismatch: {0}")]
    SpecMismatch(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Shape(_)
            | Error::InvalidArgument(_)
            | Error::BlockTooLarge { .. }
            | Error::Config(_)
            | Error::SpecMismatch(_) => ErrorClass::Config,
            Error::NonFinite { .. }
            | Error::NonScalarBackward(_)
            | Error::GradNotReset
            | Error::Diverged { .. } => ErrorClass::Numerical,
            Error::Verification(_) => ErrorClass::Verification,
            Error::Data(_)
            | Error::Checkpoint(_)
            | Error::Io { .. }
            | Error::Image { .. }
            | Error::Json(_) => ErrorClass::Data,
        }
    }
}
