use thiserror::Error;

/// Errors raised anywhere in the model, sampler, or I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value {value} at row {row}, column {col} is outside the support of {kind}")]
    OutOfSupport { row: usize, col: usize, value: String, kind: String },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("block update requires enumerating 2^{q} states; q must be at most {max}")]
    TooManyAttributes { q: usize, max: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// 2: configuration, 3: data, 4: numerical failure, 1: anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::TooManyAttributes { .. } => 2,
            Error::Infeasible(_) => 2,
            Error::DimensionMismatch(_)
            | Error::OutOfSupport { .. }
            | Error::Data(_)
            | Error::Empty(_)
            | Error::Csv(_) => 3,
            Error::NotPositiveDefinite(_) | Error::NonFinite(_) => 4,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
