use thiserror::Error;

/// Errors raised by the library. Non-convergence of a single fixed-point run is
/// not an error; it is reported through `FixedPointReport::converged`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measures live on different spin spaces ({0} vs {1})")]
    SpaceMismatch(String, String),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid spin space: {0}")]
    InvalidSpace(String),

    #[error("observable component {0} is constant on the node set")]
    DegenerateObservable(usize),

    #[error("invalid interaction: {0}")]
    InvalidInteraction(String),

    #[error("heat-kernel series needs degree {needed} but the cap is {cap}")]
    TruncationInsufficient { needed: usize, cap: usize },

    #[error("kernel rejected: {0}")]
    KernelRejected(String),

    #[error("kernel marginal condition violated: defect {defect:e} exceeds {tol:e}")]
    MarginalViolation { defect: f64, tol: f64 },

    #[error("partition class {0} has zero a-priori mass")]
    EmptyPartitionClass(String),

    #[error("normalizer underflow for transformed node {0}")]
    NumericalUnderflow(usize),

    #[error("no consistent measure found by the fixed-point search")]
    NoConsistentMeasure,

    #[error("{} Psi-minimal clusters within tie tolerance (psi = {psi:?})", psi.len())]
    NonUniqueMinimizer { psi: Vec<f64>, magnetizations: Vec<Vec<f64>> },

    #[error("interaction does not declare a homogeneity degree")]
    NotHomogeneous,

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("grid construction unsupported: {0}")]
    GridUnsupported(String),

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
