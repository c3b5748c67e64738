use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The kernel matrix could not be factorized even with the largest jitter.
    #[error(
        "covariance of {n} points is not positive definite \
         (jitter {jitter:.3e}, min diagonal {min_diagonal:.3e}, max diagonal {max_diagonal:.3e})"
    )]
    NotPositiveDefinite {
        n: usize,
        jitter: f64,
        min_diagonal: f64,
        max_diagonal: f64,
    },

    #[error("query slot {query} precedes buffered slot {latest}")]
    SlotInPast { query: u64, latest: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
