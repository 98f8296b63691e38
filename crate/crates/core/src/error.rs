use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("table size {0} is not a power of two")]
    NotPowerOfTwo(u64),

    #[error("independence k must be at least 1")]
    ZeroIndependence,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear probing table of size {0} is full")]
    TableFull(u64),

    #[error("strategy balance is infeasible for a node with {two_m} keys: {reason}")]
    InfeasibleBalance { two_m: u64, reason: String },

    #[error("exact enumeration budget exceeded: 2m = {two_m} > {limit}")]
    BudgetExceeded { two_m: u64, limit: u64 },

    #[error("probabilities of a strategy mix must lie in [0,1] and sum to 1")]
    InvalidMix,

    #[error("calibration missing for t = {t}, level {level}")]
    CalibrationMissing { t: u64, level: u32 },

    #[error("calibration cache mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("under-powered configuration: {0}")]
    UnderPowered(String),

    #[error("too many ties: {ties} of {trials} trials")]
    TooManyTies { ties: u64, trials: u64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
