use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("letter {letter} is outside an alphabet of {size} maps")]
    LetterOutOfRange { letter: usize, size: usize },

    #[error("level {level} is outside the range of the observable: {reason}")]
    LevelOutOfRange { level: f64, reason: &'static str },

    #[error("no exceedances observed ({0})")]
    NoExceedances(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("intervals [{0}, {1}) and [{2}, {3}) overlap")]
    OverlappingIntervals(f64, f64, f64, f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
