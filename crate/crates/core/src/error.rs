use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("record {record}: expected dimension {expected}, found {found}")]
    RecordWidth {
        record: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector {index}: non-finite component")]
    NonFinite { index: usize },
    #[error("vector {index} has zero norm")]
    ZeroNorm { index: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("epsilon grid is not ascending at position {index}")]
    NonAscendingGrid { index: usize },
    #[error("sample count {s} exceeds candidate count {m}")]
    SampleTooLarge { s: usize, m: usize },
    #[error("point {point} has {count} training epsilon values, at least 2 required")]
    TooFewTrainingEps { point: usize, count: usize },
    #[error("no groundtruth negatives at eps {eps} with tau {tau}; reconsider tau or eps")]
    NoNegatives { eps: f64, tau: u32 },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("cosine metric requires unit-normalized vectors (vector {index} has norm {norm})")]
    NotNormalized { index: usize, norm: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
