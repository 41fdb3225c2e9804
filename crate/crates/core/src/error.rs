use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel matrix is not positive definite after jitter escalation (last jitter {jitter:e})")]
    Conditioning { jitter: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("table load failed: {0}")]
    TableLoad(String),

    #[error("no table row for assignment {0}")]
    MissingCombination(String),

    #[error("evaluator timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("evaluator protocol error: {0}")]
    Protocol(String),

    #[error("evaluator failed: {0}")]
    Evaluator(String),

    #[error("CMA-ES state corrupted: {0}")]
    StateCorruption(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
