use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Invariant { row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("imputation error: column '{column}' has no observed values in cohort '{cohort}'")]
    AllMissing { column: String, cohort: String },

    #[error(
        "perfect separation detected (|coefficient| reached {max_abs_coef:.2}); \
         refit with a small ridge penalty"
    )]
    PerfectSeparation { max_abs_coef: f64 },

    #[error("model did not converge after {iterations} iterations (deviance {deviance})")]
    NonConvergence { iterations: usize, deviance: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
