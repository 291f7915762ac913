use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped by the CLI exit-code taxonomy: configuration and
/// domain errors map to exit code 2, numerical failures to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("partition depth exhausted at level {level}: {reason}")]
    DepthExhausted { level: usize, reason: String },

    #[error("sub-box {sub} is not contained in parent box {parent}")]
    NotContained { sub: String, parent: String },

    #[error("factorization failed at shift {shift}: {reason}")]
    Factorization { shift: f64, reason: String },

    #[error("dense eigensolver refused: {sites} sites exceeds the dense cap of {cap}; use inertia counting")]
    DenseCapExceeded { sites: usize, cap: usize },

    #[error("resolvent solve is ill-conditioned at Im z = {im:e}; raise Im z")]
    Conditioning { im: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical kernels (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Factorization { .. } | Error::Conditioning { .. } | Error::DenseCapExceeded { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
