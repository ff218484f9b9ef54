use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible mean {requested}: the largest achievable mean for this family is {max_feasible}")]
    InfeasibleMean { requested: f64, max_feasible: f64 },

    #[error("argument {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rejection budget exhausted after {tries} tries ({draws} elementary draws)")]
    BudgetExhausted { tries: u64, draws: u64 },

    #[error("numerical integrity check failed: {0}")]
    Numerical(String),

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("table too short: {0}")]
    TableTooShort(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether retrying (with a larger budget or another stream) can succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::BudgetExhausted { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
