use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: u64, n: usize },

    #[error("coordinate {index} reached magnitude {magnitude}, above the bound m = {bound}")]
    MagnitudeBound { index: usize, magnitude: u128, bound: u64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible stream spec: {0}")]
    InfeasibleSpec(String),

    #[error("level counts sum to {total}, more than the dimension {n}")]
    CountsExceedDimension { total: u64, n: usize },

    #[error("mmc unavailable: supply a concentration profile or an explicit bound")]
    MmcUnavailable,

    #[error("sketches are not compatible for merging: {0}")]
    IncompatibleMerge(&'static str),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("malformed config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
