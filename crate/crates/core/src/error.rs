use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected:?}, got {actual:?}")]
    InputShape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("dataset is empty")]
    EmptyData,

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("requested {requested} samples but only {available} are available")]
    Size { requested: usize, available: usize },

    #[error("insufficient samples in {group}: need {needed}, pool has {available}")]
    InsufficientSamples {
        group: String,
        needed: usize,
        available: usize,
    },

    #[error("influence removal needs at least two clients, got {0}")]
    DegenerateFederation(usize),

    #[error("cosine similarity undefined for a zero-norm vector")]
    UndefinedSimilarity,

    #[error("cannot normalize a zero-norm vector")]
    Normalization,

    #[error("central moments need at least two samples, got {0}")]
    MomentUndefined(usize),

    #[error("timeline error: {0}")]
    Timeline(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("dataset not found at {path}; {instructions}")]
    MissingDataset { path: PathBuf, instructions: String },

    #[error("I/O error on {path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
