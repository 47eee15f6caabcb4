use thiserror::Error;

/// Errors surfaced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("register layout needs {needed} bits, cap is {cap}")]
    CapExceeded { needed: usize, cap: usize },

    #[error("protocol failure: {0}")]
    Protocol(String),

    #[error("interaction budget of {budget} steps exhausted")]
    BudgetExhausted { budget: u64 },

    #[error("state space too large: {states} states exceeds bound {bound}")]
    Intractable { states: usize, bound: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
