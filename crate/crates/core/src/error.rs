use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch between {0} and {1}")]
    GridMismatch(&'static str, &'static str),

    #[error("potential derivative is not finite at direction {direction:?}")]
    NonFinitePotential { direction: [f64; 3] },

    #[error("quadrature did not converge (estimate {estimate:.3e} > tol {tol:.3e}) at node {node:?}")]
    QuadratureNotConverged {
        node: [f64; 3],
        estimate: f64,
        tol: f64,
    },

    #[error("fixed-point iteration hit max_iters={iters} (last residual {residual:.3e})")]
    MaxItersExceeded {
        iters: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("fixed-point residual grew to {residual:.3e} (10x above minimum {minimum:.3e})")]
    DivergenceDetected {
        residual: f64,
        minimum: f64,
        history: Vec<f64>,
    },

    #[error("profile norm {norm:.3e} exceeds the a-priori ceiling {ceiling:.3e}")]
    NormCeilingExceeded { norm: f64, ceiling: f64 },

    #[error("continuation stalled at sigma={failed_sigma}; last good sigma={last_good_sigma:?}: {reason}")]
    ContinuationStalled {
        last_good_sigma: Option<f64>,
        failed_sigma: f64,
        reason: String,
    },

    #[error("time step rejected down to the floor dt={dt:.3e} at t={t}")]
    StepRejected { t: f64, dt: f64 },

    #[error("cylinder out of range: {0}")]
    CylinderOutOfRange(String),

    #[error("test function support violation: {0}")]
    SupportViolation(String),

    #[error("insufficient shells for decay fit: {0}")]
    InsufficientShells(usize),

    #[error("malformed field dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
