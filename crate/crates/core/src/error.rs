use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: row {row}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("channel {channel} has zero variance")]
    ZeroVarianceChannel { channel: usize },

    #[error("feature {feature} has zero spread in the fitting set")]
    ZeroVarianceFeature { feature: &'static str },

    #[error("batch-norm running statistics are undefined before the first training batch")]
    BatchNormUninitialized,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint {what} mismatch: expected {expected}, found {found}")]
    CheckpointMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("internal: {0}")]
    Internal(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used for machine-parsable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Parse { .. } => "parse",
            Error::ZeroVarianceChannel { .. } => "zero-variance-channel",
            Error::ZeroVarianceFeature { .. } => "zero-variance-feature",
            Error::BatchNormUninitialized => "batchnorm-uninitialized",
            Error::NonFinite(_) => "non-finite",
            Error::Divergence(_) => "divergence",
            Error::Checkpoint(_) => "checkpoint",
            Error::CheckpointMismatch { .. } => "checkpoint-mismatch",
            Error::Config(_) => "config",
            Error::Internal(_) => "internal",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
