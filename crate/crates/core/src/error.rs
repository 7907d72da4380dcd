use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lag {lag} is outside the covariance table (length {len})")]
    LagOutOfRange { lag: usize, len: usize },

    #[error("N = {0} is too small: level indices need N >= 16")]
    BigNTooSmall(u64),

    #[error("circulant embedding is not nonnegative definite: eigenvalue {eigenvalue:e} (max {max:e})")]
    NotEmbeddable { eigenvalue: f64, max: f64 },

    #[error("index {index} is outside the environment range [{low}, {high}]")]
    IndexOutOfEnvironment { index: i64, low: i64, high: i64 },

    #[error("walk path was not absorbed at -1")]
    PathCensored,

    #[error("every trajectory is censored")]
    AllCensored,

    #[error("estimate at n = {n} is not positive ({estimate})")]
    NonPositiveEstimate { n: u64, estimate: f64 },

    #[error("first-passage level must be nonzero")]
    LevelZero,

    #[error("environment too short: need index {needed}, have {available}")]
    EnvironmentTooShort { needed: usize, available: usize },

    #[error("{0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
