use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or arguments.
    Validation,
    /// Filesystem or serialization failure.
    Io,
    /// Input data violates a contract of the requested operation.
    DataContract,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing target column")]
    MissingTargetColumn,
    #[error("non-numeric cell at row {row}, column '{column}': {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}, column '{column}'")]
    NonFiniteValue { row: usize, column: String },
    #[error("unexpected column '{0}'")]
    UnexpectedColumn(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("region of interest {index} does not fit inside the grid")]
    RoiOutOfBounds { index: usize },
    #[error("regions of interest {first} and {second} overlap")]
    RoiOverlap { first: usize, second: usize },
    #[error("degenerate ground truth: no nonzero weights")]
    DegenerateGroundTruth,
    #[error("cannot calibrate noise: the noiseless signal has zero norm")]
    ZeroSignal,

    #[error("pair policy requires subject labels")]
    MissingSubjects,
    #[error("empty pair set")]
    EmptyPairSet,
    #[error("invalid pair policy: {0}")]
    InvalidPolicy(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid fit specification: {0}")]
    InvalidFitSpec(String),

    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("fold {fold} has no valid pairs")]
    EmptyFold { fold: usize },

    #[error("zero bandwidth: all x values are identical")]
    ZeroBandwidth,
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Io { .. } | Csv(_) | Json(_) => ErrorClass::Io,
            InvalidConfig(_)
            | RoiOutOfBounds { .. }
            | RoiOverlap { .. }
            | InvalidPolicy(_)
            | InvalidFitSpec(_)
            | InvalidSplit(_) => ErrorClass::Validation,
            DimensionMismatch(_) => ErrorClass::Validation,
            _ => ErrorClass::DataContract,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
