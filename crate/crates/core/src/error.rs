use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation needed a time index outside the sampled window.
    #[error("time index {index} is outside the orbit window (requires window radius N >= {required}, have {radius})")]
    OutOfWindow { index: i64, required: u64, radius: u64 },

    #[error("numerical domain error at step {step}: {detail}")]
    NumericalDomain { step: usize, detail: String },

    #[error("selector never fired within the horizon; subsection is empty")]
    EmptySubsection,

    #[error("oracle not applicable: {0}")]
    OracleInapplicable(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A pullback cloud escaped to infinity; the seed box missed the attractor.
    #[error("degenerate fibre at t={t}, cell={cell}: {detail}")]
    DegenerateFibre { t: i64, cell: usize, detail: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
