use crate::page::PageId;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("page {0} is already buffered")]
    DuplicatePage(PageId),
    #[error("unknown page id {0}")]
    UnknownPage(PageId),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },
    #[error("need at least {need} samples, got {got}")]
    InputTooSmall { need: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("timestamp {got} precedes previous timestamp {prev}")]
    NonMonotoneTimestamp { prev: i64, got: i64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("malformed provider response ({reason}): {payload}")]
    MalformedResponse { reason: String, payload: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported snapshot format: {0}")]
    SnapshotVersion(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
