use thiserror::Error;

/// Errors produced by channel construction and bound evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid multipath profile: {0}")]
    InvalidProfile(String),

    #[error("invalid OFDM configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("non-finite integrand value at sample {index}")]
    NonFinite { index: usize },

    #[error(
        "precoder construction failed: semi-unitarity residual {orthonormality:.3e}, \
         rank residual {rank_ratio:.3e}, d_perp {d_perp}"
    )]
    Construction {
        orthonormality: f64,
        rank_ratio: f64,
        d_perp: usize,
    },

    #[error("uncertified supremum evaluation requested for a certified bound")]
    Uncertified,

    #[error("matrix parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
