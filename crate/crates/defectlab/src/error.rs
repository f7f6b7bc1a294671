use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet mismatch: expected {expected} symbols, found {found}")]
    AlphabetMismatch { expected: usize, found: usize },

    #[error("symbol {symbol} out of range for an alphabet of size {size}")]
    SymbolOutOfRange { symbol: u8, size: usize },

    #[error("exact region [{lo}, {hi}] cannot absorb a light cone of radius {radius}")]
    RegionExhausted { lo: i64, hi: i64, radius: usize },

    #[error("pattern of length {len} does not fit in an exact region of width {width}")]
    PatternTooLong { len: usize, width: usize },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid particle system: {0}")]
    InvalidSystem(String),

    #[error("invalid subshift: {0}")]
    InvalidSubshift(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Feasibility,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::RegionExhausted { .. }
            | Error::PatternTooLong { .. }
            | Error::Infeasible(_)
            | Error::AlphabetMismatch { .. } => ErrorClass::Feasibility,
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Config,
        }
    }
}
