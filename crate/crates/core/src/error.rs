use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{op}: shape mismatch {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("feature dimension mismatch: expected P = {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("degenerate fold: fold {0} contains a single class")]
    DegenerateFold(usize),

    #[error("degenerate covariance: input has zero variance")]
    DegenerateCovariance,

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("backward called twice without a new forward pass")]
    TapeConsumed,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("ground truth is not available for this dataset")]
    MissingTruth,

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("hash verification failed for `{file}`")]
    HashMismatch { file: String },

    #[error("artifact kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("artifact already exists at {0}")]
    AlreadyExists(PathBuf),

    #[error("provenance: {0}")]
    Provenance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format { path: path.into(), detail: detail.into() }
    }
}
