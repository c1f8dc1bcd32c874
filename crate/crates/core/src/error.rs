use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is not connected")]
    Disconnected,

    #[error("operation requires a tree graph")]
    NotATree,

    #[error("empty region")]
    EmptyRegion,

    #[error("alpha weight base M = {m} must exceed (D-1)^2 = {bound}")]
    AlphaBase { m: f64, bound: f64 },

    #[error("truncation too shallow: {0}")]
    TruncationTooShallow(String),

    #[error("non-monotone rate profile at index {index}")]
    NonMonotoneProfile { index: usize },

    #[error("initial configuration violates floor k = {floor} at site {site}")]
    FloorViolation { site: usize, floor: u32 },

    #[error("initial configuration has particles outside the active region at site {0}")]
    OutsideRegion(usize),

    #[error("unstable regime: gamma = {gamma} <= lambda * theta = {bound}")]
    Unstable { gamma: f64, bound: f64 },

    #[error("matrix is singular or ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("memory budget exceeded: {needed} pair entries > {budget}")]
    Budget { needed: usize, budget: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),

    #[error("insufficient replicas: {got} < {needed}")]
    InsufficientReplicas { got: usize, needed: usize },

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("io: {0}")]
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
