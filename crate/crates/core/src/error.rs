use thiserror::Error;

pub type Result<T> = std::result::Result<T, DcaError>;

/// Errors raised by the analysis library.
///
/// Validation variants describe bad input (exit code 2 in the CLI); the
/// remaining variants are runtime failures (exit code 3).
#[derive(Debug, Error)]
pub enum DcaError {
    #[error("invalid decision threshold {0}: must satisfy 0 <= t < 1")]
    InvalidThreshold(f64),

    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("duplicate strategy name `{0}`")]
    DuplicateStrategy(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: score {value} is outside [0, 1]")]
    ScoreOutOfRange {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: outcome `{value}` is not 0 or 1")]
    NonBinaryOutcome {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: time `{value}` must be a positive number")]
    NonPositiveTime {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Malformed {
        row: usize,
        column: String,
        value: String,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl DcaError {
    /// True for errors caused by invalid user input rather than a runtime fault.
    pub fn is_validation(&self) -> bool {
        !matches!(self, DcaError::Numerical(_) | DcaError::Json(_))
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        DcaError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
