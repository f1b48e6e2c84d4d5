use thiserror::Error;

/// Broad classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Inconsistent or invalid configuration.
    Config,
    /// Input data violates a precondition.
    Data,
    /// A numerical routine failed.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("pole of the gamma function at {0}")]
    Pole(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{routine} did not converge after {iterations} iterations")]
    NonConvergence {
        routine: &'static str,
        iterations: usize,
    },

    #[error("linear system is numerically singular: {0}")]
    Singular(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("all cases are null at this statistic (local fdr = {fdr})")]
    AllNull { fdr: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("could not bracket root: {0}")]
    Bracketing(String),

    #[error("normal transform saturated at x = {x} (chi-squared cdf rounds to 1)")]
    Saturation { x: f64 },

    #[error("zero variance in response")]
    ZeroVariance,

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("truth labels are required for this operation")]
    MissingTruth,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidPrior(_) | Error::InvalidConfig(_) => ErrorKind::Config,
            Error::Domain(_)
            | Error::Pole(_)
            | Error::InsufficientData { .. }
            | Error::ZeroVariance
            | Error::MissingTruth
            | Error::AllNull { .. } => ErrorKind::Data,
            Error::NonConvergence { .. }
            | Error::Singular(_)
            | Error::Quadrature(_)
            | Error::Bracketing(_)
            | Error::Saturation { .. } => ErrorKind::Numerical,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
