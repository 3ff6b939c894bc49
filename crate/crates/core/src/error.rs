use thiserror::Error;

/// Errors raised by the numerical routines and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel singularity: points coincide")]
    Singular,

    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("step budget of {budget} exceeded (last position {position:?})")]
    Budget { budget: usize, position: Vec<f64> },

    #[error("perturbation operator is not contracting after {terms} terms (ratio {ratio:.3}); use the Monte-Carlo resolvent instead")]
    NonContracting { terms: usize, ratio: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("u·ν is not integrable on bump B({center:?}, {radius})")]
    Integrability { center: Vec<f64>, radius: f64 },

    #[error("infeasible capacity problem: {0}")]
    Infeasible(String),

    #[error("rejected configuration: {0}")]
    Rejected(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
