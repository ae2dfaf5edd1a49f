use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("level set is empty: log c = {log_c} exceeds the posterior maximum {log_post_star}")]
    Infeasible { log_c: f64, log_post_star: f64 },

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
