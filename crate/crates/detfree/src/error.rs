use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit codes: configuration and usage problems
/// exit 2, numerical failures exit 3, file problems exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("Lanczos breakdown at step {step}")]
    LanczosBreakdown { step: usize },

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),

    #[error("zero-variance series: {0}")]
    ZeroVariance(String),

    #[error("guard violated: {0}")]
    Guard(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config/usage, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::InvalidArgument(_)
            | Error::Guard(_)
            | Error::Config(_) => 2,
            Error::NotSymmetric(_)
            | Error::NotPositiveDefinite(_)
            | Error::LanczosBreakdown { .. }
            | Error::NoConvergence(_)
            | Error::ZeroVariance(_) => 3,
            Error::Parse { .. } | Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
