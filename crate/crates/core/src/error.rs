use thiserror::Error;

/// Errors raised by the estimation, auditing and experiment routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid wavelet index (level {level}, position {position})")]
    InvalidIndex { level: i32, position: usize },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("perturbation amplitude {delta} too large; maximal admissible amplitude is {max_delta}")]
    AmplitudeTooLarge { delta: f64, max_delta: f64 },

    #[error("series sum_j j^(-a) diverges for a = {0} (need a > 1)")]
    DivergentSeries(f64),

    #[error("privacy budget too small: n * alpha^2 = {0}")]
    InsufficientBudget(f64),

    #[error("sample too small: got {got}, need at least {need}")]
    SampleTooSmall { got: usize, need: usize },

    #[error("sample size {0} must be even")]
    OddSample(usize),

    #[error("records have inconsistent shapes")]
    ShapeMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("weight bound violated: |w(x)| = {value} exceeds bound {bound}")]
    WeightBound { value: f64, bound: f64 },

    #[error("response probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("degenerate regression input: {0}")]
    DegenerateFit(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("CSV error: {0}")]
    Csv(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
