use thiserror::Error;

/// Errors produced by the estimators, calibrators and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} lies outside [0, 1]")]
    Domain { value: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible bounds: need a <= 1 <= b, got a = {a}, b = {b}")]
    Infeasible { a: f64, b: f64 },

    #[error("expert class too large: {candidates} raw candidates exceed cap {cap}; use a factory class instead")]
    SizeExceeded { candidates: String, cap: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit(value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain { value })
    }
}
