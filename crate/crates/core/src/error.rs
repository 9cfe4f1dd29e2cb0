use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the model, learner and evaluation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid observation (x={x}, y={y}): x must lie in [0,1] and y in {{0,1}}")]
    InvalidObservation { x: f64, y: u8 },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),

    #[error("marginal families do not match: {left} vs {right}")]
    FamilyMismatch { left: &'static str, right: &'static str },

    #[error("unsupported pairing: {0}")]
    Unsupported(String),

    #[error("drift step {step} at t={t} exceeds the unit interval (eta={eta})")]
    StepTooLarge { t: usize, step: f64, eta: f64 },

    #[error("observation (x={x}, y={y}) is outside the class support")]
    OutsideSupport { x: f64, y: u8 },

    #[error("empty sample")]
    EmptySample,

    #[error("history has length {got}, expected {expected}")]
    HistoryLength { expected: usize, got: usize },

    #[error("horizon {horizon} exceeds available length {available}")]
    HorizonTooLong { horizon: usize, available: usize },

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
