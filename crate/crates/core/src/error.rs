use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GipError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GipError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward requires a 1x1 output, got {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph has a zero self-kernel; normalized similarity is undefined")]
    ZeroSelfKernel,

    #[error("all graphs fell into a single cluster; silhouette is undefined")]
    SingleCluster,

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence { epoch: usize, batch: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GipError {
    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        GipError::Parse { path: path.into(), line, msg: msg.into() }
    }
}
