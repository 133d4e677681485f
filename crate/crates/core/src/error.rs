use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {point} lies outside the grid interval [{lower}, {upper}]")]
    OutOfDomain { point: f64, lower: f64, upper: f64 },

    #[error("non-finite value in {field} at node {index}")]
    NonFinite { field: &'static str, index: usize },

    #[error("singular linear system while factoring the Newton matrix")]
    SingularMatrix,

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("trajectory not settled: energy varies by {variation} over the last quarter")]
    NotConverged { variation: f64 },

    #[error("no fit window found: {0}")]
    NotAsymptotic(String),

    #[error("bisection failed: {0}")]
    Bisection(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
