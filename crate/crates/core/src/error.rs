use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {value} outside [-1, 1] beyond clamp tolerance")]
    Domain { value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("input not normalized: squared norm {norm_sq}, expected {expected}")]
    NotNormalized { norm_sq: f64, expected: f64 },

    #[error("matrix is not symmetric (max relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite after jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "rejection budget exhausted after {attempts} attempts ({accepted} accepted, rate {acceptance_rate:e})"
    )]
    AttemptBudgetExhausted {
        attempts: u64,
        accepted: usize,
        acceptance_rate: f64,
    },

    #[error("empty sample set")]
    EmptySamples,

    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("corrupt or truncated file: {0}")]
    Corrupt(String),

    #[error("requested {requested} examples but only {available} available")]
    CountExceeded { requested: usize, available: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
