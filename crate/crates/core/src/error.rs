//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // signal derivation
    #[error("unbounded gap: {0} values are missing")]
    UnboundedGap(&'static str),
    #[error("empty signal")]
    EmptySignal,
    #[error("too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },

    // ccf estimation
    #[error("series lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("lag {lag} exceeds series length {len}")]
    LagExceedsSeries { lag: i64, len: usize },
    #[error("degenerate series: zero variance")]
    DegenerateSeries,
    #[error("grid too fine for sample rate {rate_hz} Hz: lags {h1} s and {h2} s map to the same sample lag")]
    GridTooFine { rate_hz: f64, h1: f64, h2: f64 },

    // functional samples
    #[error("empty group")]
    EmptyGroup,
    #[error("insufficient sessions: n = {0}, need n > 2")]
    InsufficientSessions(usize),
    #[error("group size {n} too small, need at least {min}")]
    GroupTooSmall { n: usize, min: usize },
    #[error("mismatched grids or measures across sessions")]
    MismatchedSamples,
    #[error("too few sessions relative to dimension: n = {n}, p = {p}, need n > p + 2")]
    TooFewForDimension { n: usize, p: usize },

    // global tests
    #[error("degenerate covariance at lag {0} s")]
    DegenerateCovariance(f64),
    #[error("cannot standardize at lag {0} s")]
    CannotStandardize(f64),
    #[error("invalid calibration: beta = {beta}, d = {d}")]
    InvalidCalibration { beta: f64, d: f64 },
    #[error("budget exceeded: {requested} replicate-sessions requested, limit {limit}")]
    BudgetExceeded { requested: u64, limit: u64 },
    #[error("too few sessions: n = {0}, need at least 4")]
    TooFewSessions(usize),
    #[error("underpowered comparison: group `{group}` has {n} sessions, hard floor is 3")]
    UnderpoweredComparison { group: String, n: usize },

    // simulation
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("nonstationary: spectral radius {0} >= 1")]
    Nonstationary(f64),

    // construction / validation
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid session `{id}`: {reason}")]
    InvalidSession { id: String, reason: String },
    #[error("invalid query `{query}`: {reason}")]
    InvalidQuery { query: String, reason: String },
    #[error("disjointness violated: the two sides of `{0}` select overlapping session sets")]
    OverlappingGroups(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("nothing to do: {0}")]
    NothingToDo(&'static str),

    // io / formats
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Coarse failure class, used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::DegenerateSeries
            | Error::DegenerateCovariance(_)
            | Error::CannotStandardize(_)
            | Error::InvalidCalibration { .. } => ErrorClass::Degenerate,
            _ => ErrorClass::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Degenerate,
}
