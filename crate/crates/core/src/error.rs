use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("covariance not PSD")]
    NotPsd,
    #[error("degenerate cluster")]
    DegenerateCluster,
    #[error("cluster too small to split: {size} points, need {min}")]
    TooSmallToSplit { size: usize, min: usize },
    #[error("degenerate split")]
    DegenerateSplit,
    #[error("not a partition: {0}")]
    NotPartition(String),
    #[error("degenerate data")]
    DegenerateData,
    #[error("singular covariance")]
    SingularCovariance,
    #[error("EM failed: {0}")]
    EmFailed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
