use thiserror::Error;

/// Errors produced across the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("singular regressor matrix: {0}")]
    Degenerate(String),
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("order selection failed: {0}")]
    Selection(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("unsupported model document version `{found}` (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
