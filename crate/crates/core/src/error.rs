use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {what} (index {index}, sum {sum})")]
    InvalidDistribution {
        what: &'static str,
        index: usize,
        sum: f64,
    },
    #[error("reward {value} at pair {index} is outside [0, 1]")]
    RewardOutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("feature matrix is rank deficient (smallest singular value {min_singular_value:e})")]
    RankDeficient { min_singular_value: f64 },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("policy does not induce a unique stationary distribution")]
    NotUnichain,
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is near singular: eigenvalue {eigenvalue:e} below floor {floor:e}")]
    NearSingular { eigenvalue: f64, floor: f64 },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("target puts mass on pair {index} which the behavior never visits")]
    UnsupportedPoint { index: usize },
    #[error("all-ones vector is not in the feature span (residual {residual:e})")]
    AssumptionViolated { residual: f64 },
    #[error("action values are not realizable by the features (residual {residual:e})")]
    NotRealizable { residual: f64 },
    #[error("dataset exhausted: run needs {needed} samples, dataset holds {available}")]
    DatasetExhausted { needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// An error raised while running one stage of an experiment.
    #[error("stage `{stage}` failed: {source} (config: {config})")]
    Stage {
        stage: &'static str,
        config: String,
        #[source]
        source: Box<Error>,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Whether this error means the input was malformed (as opposed to a
    /// failure while computing).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::ConfigInvalid(_) | Error::Json(_) | Error::DimensionMismatch(_) => true,
            Error::InvalidDistribution { .. } | Error::RewardOutOfRange { .. } => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
