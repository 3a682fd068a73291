use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the updating pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("mass matrix is not positive definite")]
    Factorization,

    #[error("requested {requested} modes but only {available} non-rigid modes exist")]
    ModeRange { requested: usize, available: usize },

    #[error("no mode pair reached the MAC threshold {threshold}")]
    EmptyPairing { threshold: f64 },

    #[error("repeated eigenvalues {0} and {1} among retained modes")]
    DegenerateModes(usize, usize),

    #[error("coarse points are collinear; cannot triangulate")]
    DegenerateGeometry,

    #[error("point {index} at ({x}, {y}) lies outside the coarse grid")]
    Extrapolation { index: usize, x: f64, y: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn dimension(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
