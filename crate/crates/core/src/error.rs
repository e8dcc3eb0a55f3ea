use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} is outside the range of Q{int_bits}.{frac_bits}")]
    Range {
        value: f64,
        int_bits: u32,
        frac_bits: u32,
    },

    #[error("fixed-point overflow in {signal} (Q{int_bits}.{frac_bits})")]
    Overflow {
        signal: &'static str,
        int_bits: u32,
        frac_bits: u32,
    },

    #[error("fixed-point format mismatch: {0}")]
    FormatMismatch(String),

    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("problem has state constraints and cannot be condensed")]
    NotCondensable,

    #[error("insufficient precision: {0}")]
    Precision(String),

    #[error("KKT matrix is singular: {0}")]
    SingularKkt(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("constraint layout error: {0}")]
    Layout(String),

    #[error("error recurrence is not Schur stable (spectral radius {0})")]
    UnstableSystem(f64),

    #[error("reference QP solver failed: {0}")]
    OracleFailure(String),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
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

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
