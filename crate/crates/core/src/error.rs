use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("requested dimension {requested} exceeds bound {bound}")]
    DimTooLarge { requested: usize, bound: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("{stream} PCA provides {available} components, {needed} needed")]
    InsufficientComponents {
        stream: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("flow statistics contain no frames")]
    EmptyStats,
    #[error("{samples} samples cannot form {k} clusters")]
    TooFewSamples { samples: usize, k: usize },
    #[error("data has fewer than {k} distinct points")]
    DegenerateData { k: usize },
    #[error("k = {k} exceeds codebook size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("inconsistent vector dimension: expected {expected}, got {got}")]
    InconsistentDim { expected: usize, got: usize },
    #[error("word id {id} outside vocabulary of {vocab}")]
    UnknownWordId { id: usize, vocab: usize },
    #[error("window {window} longer than sequence {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("pooling mask selects no positions")]
    EmptyMask,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("transition matrix {0} is not row-stochastic")]
    NotStochastic(usize),
    #[error("transition matrices do not share a stationary distribution")]
    StationaryMismatch,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::BadConfig(_)
            | Error::InvalidRate(_)
            | Error::KTooLarge { .. }
            | Error::DimTooLarge { .. }
            | Error::WindowTooLarge { .. } => ErrorKind::Usage,
            Error::NonFiniteLoss { .. } | Error::NonFiniteInput => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Error::InsufficientData { .. } => "InsufficientData",
            Error::DimTooLarge { .. } => "DimTooLarge",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::InsufficientComponents { .. } => "InsufficientComponents",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::EmptyStats => "EmptyStats",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::DegenerateData { .. } => "DegenerateData",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::InconsistentDim { .. } => "InconsistentDim",
            Error::UnknownWordId { .. } => "UnknownWordId",
            Error::WindowTooLarge { .. } => "WindowTooLarge",
            Error::EmptyMask => "EmptyMask",
            Error::InvalidRate(_) => "InvalidRate",
            Error::BadConfig(_) => "BadConfig",
            Error::EmptyDataset => "EmptyDataset",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::NotStochastic(_) => "NotStochastic",
            Error::StationaryMismatch => "StationaryMismatch",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::Format { .. } => "Format",
            Error::Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl ToString) -> Self {
        Error::Format {
            what,
            detail: detail.to_string(),
        }
    }
}
