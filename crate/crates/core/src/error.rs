use thiserror::Error;

/// Errors produced by model evaluation, simulation, estimation and file IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("session has no items")]
    EmptySession,

    #[error("item index {index} out of range for catalog of {count} items")]
    ItemOutOfRange { index: usize, count: usize },

    #[error("timestamps must be strictly increasing (t[{index}] = {t} after {prev})")]
    NonIncreasingTimestamps { index: usize, prev: f64, t: f64 },

    #[error("timestamp {t} lies beyond horizon {horizon}")]
    AfterHorizon { t: f64, horizon: f64 },

    #[error("history event at {event} is not strictly before evaluation time {t}")]
    HistoryNotBefore { event: f64, t: f64 },

    #[error("link argument {0} outside [-1, 1]")]
    LinkDomain(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("zero-norm reference value")]
    ZeroNorm,

    #[error("requested top-{k} from a catalog of {count} items")]
    RankTooLarge { k: usize, count: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
