use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("transition matrix rejected: {0}")]
    Rejected(String),

    #[error("symbol {symbol} outside alphabet of size {alphabet_size}")]
    InvalidSymbol { symbol: usize, alphabet_size: usize },

    #[error("prefix of length {len} does not determine the value")]
    InsufficientPrefix { len: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("observable cap exceeded at depth {depth}")]
    CapExceeded { depth: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("truncation level is infinite but the observable is not integrable")]
    NonIntegrable,

    #[error("schedule infeasible at n = {n}: {reason}")]
    ScheduleInfeasible { n: u64, reason: String },

    #[error("de Bruijn conjugate iteration diverged at x = {x}")]
    ConjugateDiverged { x: f64 },

    #[error("second eigenvalue modulus {modulus} is not separated from 1")]
    GapViolation { modulus: f64 },

    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),

    #[error("path {path} aborted at position {position}: {source}")]
    PathAborted {
        path: u64,
        position: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config errors: {}", .0.join("; "))]
    Config(Vec<String>),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
