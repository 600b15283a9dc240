use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid month {0:?}: expected YYYY-MM no earlier than 1970-01")]
    InvalidMonth(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("year value {0} is not a whole number of months (must be a multiple of 1/12)")]
    FractionalMonths(f64),

    #[error("invalid header in {file}: expected `{expected}`, found `{found}`")]
    BadHeader {
        file: &'static str,
        expected: &'static str,
        found: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} strategy `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("cannot measure citation ratio: {0}; pass an explicit ratio instead")]
    RatioUnmeasurable(String),
}
