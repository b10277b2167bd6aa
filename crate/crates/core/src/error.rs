use thiserror::Error;

/// Errors raised while building or analysing lattice models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Fibonacci number F_{0} does not fit in 64 bits")]
    FibonacciOverflow(usize),

    #[error("kappa = B/A = {0} exceeds 1 (vanishing hoppings, trivial localization)")]
    KappaOutOfRange(f64),

    #[error("matrix is not symmetric: max |M - M^T| = {0:e}")]
    NotSymmetric(f64),

    #[error("state is not normalized: squared norm = {0}")]
    NotNormalized(f64),

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("lattice size {size} exceeds the Liouvillian cap of {cap} sites; use the Markov limit instead")]
    SizeCap { size: usize, cap: usize },

    #[error("trace drift {drift:e} at t = {time} exceeds tolerance")]
    TraceDrift { time: f64, drift: f64 },

    #[error("no state within the tracking window at L = {0}")]
    TrackingFailed(usize),

    #[error("{0}")]
    Empty(&'static str),

    #[error("unknown figure id `{id}`; valid ids: {valid}")]
    UnknownFigure { id: String, valid: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::FibonacciOverflow(_) => "fibonacci_overflow",
            Error::KappaOutOfRange(_) => "kappa_out_of_range",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::NotNormalized(_) => "not_normalized",
            Error::Lapack { .. } => "lapack",
            Error::SizeCap { .. } => "size_cap",
            Error::TraceDrift { .. } => "trace_drift",
            Error::TrackingFailed(_) => "tracking_failed",
            Error::Empty(_) => "empty_input",
            Error::UnknownFigure { .. } => "unknown_figure",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
