use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Not enough samples (or exceedances) for a meaningful statistic.
    #[error("insufficient data for {what}: need {needed}, got {got}")]
    InsufficientData {
        what: String,
        needed: usize,
        got: usize,
    },

    /// A data invariant (positivity, bounds, ...) does not hold.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// The symmetric walk p = 1/2 is outside the model.
    #[error("p = 1/2 is excluded from the model: the first-passage count has no usable tail in the symmetric case")]
    ModelExcluded,

    /// A simulated time does not fit the fixed-point clock.
    #[error("time overflow: {0} time units exceeds the clock range")]
    TimeOverflow(f64),

    /// A configuration key failed validation.
    #[error("invalid config `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn insufficient(what: impl Into<String>, needed: usize, got: usize) -> Error {
    Error::InsufficientData {
        what: what.into(),
        needed,
        got,
    }
}
