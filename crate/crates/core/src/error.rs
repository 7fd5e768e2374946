use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("invalid kernel parameter: {0}")]
    InvalidKernel(String),

    #[error("linear kernel needs no random features")]
    LinearKernelHasNoFeatures,

    #[error("linear kernel is not shift-invariant")]
    NotShiftInvariant,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training labels contain a single class ({0})")]
    SingleClass(String),

    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("unsupported format_version {found} (this build reads {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
