use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("elastic tensor is not positive definite: eigenvalue {index} is {value:e}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    CholeskyFailed { pivot: usize, value: f64 },

    #[error("eigen iteration did not converge for eigenvalue {index}")]
    EigenNotConverged { index: usize },

    #[error("no sign change of the characteristic function for n = {n}, s = {s} on [{lo}, {hi}]")]
    Bracketing { n: u32, s: u32, lo: f64, hi: f64 },

    #[error("time step {dt:e} s violates the {constraint} limit {limit:e} s")]
    Cfl {
        dt: f64,
        constraint: &'static str,
        limit: f64,
    },

    #[error("pressure system is incompatible: net source {net:e} cannot leave a closed domain")]
    Incompatible { net: f64 },

    #[error("pressure solve did not converge in {iterations} iterations; last residuals {tail:?}")]
    PressureNotConverged { iterations: usize, tail: Vec<f64> },

    #[error("singular pressure matrix: {0}")]
    PressureFactorization(String),

    #[error("interface iteration diverged (residual growth {growth:e}); try a smaller time step")]
    InterfaceDiverged { growth: f64 },

    #[error("conservation check failed at step {step}: {what} = {value:e} exceeds {limit:e}")]
    Conservation {
        step: usize,
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown {kind} `{name}`; available: {available}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("material file: {0}")]
    MaterialFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
