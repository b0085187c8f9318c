use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Estimation stage, used to label failures the same way the replicate
/// summaries tabulate them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    /// Missingness (propensity) model.
    Psm,
    /// Conditional outcome model.
    Om,
    /// Marginal treatment model.
    Tm,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Psm => write!(f, "PSM"),
            Stage::Om => write!(f, "OM"),
            Stage::Tm => write!(f, "TM"),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{func}: argument {value} outside domain {domain}")]
    Domain {
        func: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("equicorrelated matrix is not positive definite (rho = {rho}, n = {n})")]
    Singular { rho: f64, n: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite linear predictor in cluster {cluster}")]
    Overflow { cluster: String },

    #[error("{stage} stage diverged: {reason}")]
    Divergence { stage: Stage, reason: String },

    #[error("{stage} stage: response has no variation ({detail})")]
    Separation { stage: Stage, detail: String },

    #[error("positivity violated: {count} subjects have fitted observation probability below {floor} (first offenders: {subjects:?})")]
    Positivity {
        floor: f64,
        count: usize,
        subjects: Vec<(String, usize)>,
    },

    #[error(
        "infeasible missingness correlation: joint probability {eta} outside [{lower}, {upper}]"
    )]
    InfeasibleCorrelation { eta: f64, lower: f64, upper: f64 },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("Parzen generation infeasible in cluster {cluster}: -UL - rho = {slack}")]
    Feasibility { cluster: usize, slack: f64 },

    #[error("quadrature accuracy {achieved:e} above target {target:e} (estimate {estimate:?})")]
    Accuracy {
        achieved: f64,
        target: f64,
        estimate: [f64; 4],
    },

    #[error("sandwich bread matrix is singular (condition estimate {condition:e})")]
    Inference { condition: f64 },

    #[error("all {chains} chains diverged: {reasons:?}")]
    AllChainsDiverged { chains: usize, reasons: Vec<String> },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(Arc<std::io::Error>),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(Arc::new(e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
