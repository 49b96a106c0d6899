use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pattern grid size must be even, got M_theta={m_theta}, M_phi={m_phi}")]
    OddGrid { m_theta: usize, m_phi: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("element {element} has zero energy and cannot be normalized")]
    ZeroEnergyElement { element: usize },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("matrix is ill-conditioned (condition number {condition:e})")]
    Conditioning {
        condition: f64,
        null_direction: Vec<f64>,
    },

    #[error("azimuth is unobservable at elevation {theta} rad (too close to a pole)")]
    SingularAzimuth { theta: f64 },

    #[error("position is not localizable; weakest direction {null_direction:?}")]
    Unlocalizable { null_direction: Vec<f64> },

    #[error("singular innovation covariance for component {component}, measurement {measurement}")]
    SingularInnovation { component: usize, measurement: usize },

    #[error("sigma-point generation failed: covariance is not positive semidefinite")]
    SigmaPoints,

    #[error("at least one access point is required")]
    EmptyApSet,

    #[error("maximum-likelihood optimum is ambiguous (Hessian condition {condition:e})")]
    AmbiguousEstimate { condition: f64 },

    #[error("brute-force search over {combinations} subsets exceeds the budget of {budget}")]
    CombinatorialBudget { combinations: u128, budget: u128 },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("pattern file error at line {line}: {message}")]
    PatternFormat { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("fixture `{name}` failed: {message}")]
    Fixture { name: String, message: String },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that come from a numerically infeasible geometry rather
    /// than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning { .. }
                | Error::SingularAzimuth { .. }
                | Error::Unlocalizable { .. }
                | Error::SingularInnovation { .. }
                | Error::SigmaPoints
                | Error::AmbiguousEstimate { .. }
                | Error::ZeroEnergyElement { .. }
        )
    }
}
