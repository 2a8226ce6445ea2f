//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sampler not initialized: {0}")]
    SamplerNotInitialized(String),

    #[error("polytope unbounded in sampled direction")]
    UnboundedDirection,

    #[error("covariance not invertible (smallest eigenvalue {min_eigenvalue:.3e})")]
    CovarianceNotInvertible { min_eigenvalue: f64 },

    #[error(
        "isotropization did not reach tolerance {tol:.3e} in {iterations} iterations \
         (best residual {best_residual:.3e})"
    )]
    IsotropizationFailed {
        tol: f64,
        iterations: usize,
        best_residual: f64,
    },

    #[error("enumeration budget exceeded: {required} supports > budget {budget}")]
    EnumerationBudget { required: u128, budget: u64 },

    #[error("net size guard exceeded: (3/eps)^m = {estimate:.3e} > {cap:.3e}")]
    NetBudget { estimate: f64, cap: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
