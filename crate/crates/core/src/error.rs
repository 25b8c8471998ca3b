use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value for subject {subject} at ROI {roi}")]
    NonFinite { subject: String, roi: usize },

    #[error("NC reference needs at least 2 train-split NC subjects, found {found}")]
    InsufficientReference { found: usize },

    #[error("subject {id} is not a train-split NC subject and cannot enter the NC reference")]
    ReferenceLeak { id: String },

    #[error("subject tables are misaligned: {0}")]
    Misaligned(String),

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("label {label} is outside the class set of size {classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("AUC needs both classes present (positives={positives}, negatives={negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("class {class} has {count} members, fewer than k={k} folds")]
    ClassTooSmall { class: usize, count: usize, k: usize },

    #[error("cache was produced by model version {cached}, current version is {current}")]
    StaleCache { cached: u64, current: u64 },

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("{file}:{line}: {msg}")]
    Parse { file: PathBuf, line: u64, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite { .. } => "non_finite",
            Error::InsufficientReference { .. } => "insufficient_reference",
            Error::ReferenceLeak { .. } => "reference_leak",
            Error::Misaligned(_) => "misaligned",
            Error::EmptyMask(_) => "empty_mask",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::SingleClass { .. } => "single_class",
            Error::ClassTooSmall { .. } => "class_too_small",
            Error::StaleCache { .. } => "stale_cache",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Parse { .. } => "parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
