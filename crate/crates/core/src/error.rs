use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("diagonal block {block} is not positive definite")]
    SingularBlock { block: usize },

    #[error("operator declared positive semidefinite is indefinite in {context} (quadratic form {value:e})")]
    Indefinite { context: &'static str, value: f64 },

    #[error("proximal mapping of {spec} under a {metric} metric is not supported")]
    UnsupportedMetric { spec: &'static str, metric: &'static str },

    #[error("invalid function specification: {0}")]
    InvalidSpec(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("conjugate gradient breakdown at iteration {iteration}: curvature {curvature:e}")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("constraint rows are linearly dependent: {rows:?}")]
    RankDeficient { rows: Vec<usize> },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("inner solver violated its certificate at iteration {iteration}: {which} = {value:e} > {bound:e}")]
    Certificate {
        iteration: usize,
        which: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("divergence detected at iteration {iteration}: residual {eta:e} (was {previous:e})")]
    Divergence {
        iteration: usize,
        eta: f64,
        previous: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("problem format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
