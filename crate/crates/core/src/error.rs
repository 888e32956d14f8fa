use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(
        "pump amplitude given relative to a threshold, but k1 < 2 k2 sqrt(gamma_b/gamma_c) \
         so the system has no threshold"
    )]
    NoThreshold,

    #[error("requested branch {0} does not exist in regime {1}")]
    BranchUnavailable(&'static str, &'static str),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("steady state is stale: drift residual {residual:e} exceeds {tolerance:e}")]
    StaleSteadyState { residual: f64, tolerance: f64 },

    #[error("fluctuation model is unstable: eigenvalue margin {margin:e}")]
    Unstable { margin: f64 },

    #[error("fluctuation model is marginal (margin {margin:e}) with no separable neutral subspace")]
    Marginal { margin: f64 },

    #[error("ill-conditioned linear system: {0}")]
    Conditioning(String),

    #[error("quadrature basis residue {residue:e} exceeds tolerance {tolerance:e}")]
    BasisConsistency { residue: f64, tolerance: f64 },

    #[error("output covariance is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    Physicality { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time step {dt:e} too large: must be below {limit:e}")]
    StepSize { dt: f64, limit: f64 },

    #[error("frequency {omega:e} is above the Nyquist frequency {nyquist:e}")]
    AboveNyquist { omega: f64, nyquist: f64 },

    #[error("matrix is not symmetric: max |A - A^T| = {0:e}")]
    NotSymmetric(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad user input: parameters, branch selection, grid bounds.
    Input,
    /// The operating point is unstable or the result unphysical.
    Stability,
    /// A numerical routine failed or a consistency check tripped.
    Numerical,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParams(_)
            | Error::NoThreshold
            | Error::BranchUnavailable(..)
            | Error::DimensionMismatch { .. }
            | Error::StepSize { .. }
            | Error::AboveNyquist { .. }
            | Error::NotSymmetric(_) => ErrorCategory::Input,
            Error::Unstable { .. } | Error::Marginal { .. } | Error::Physicality { .. } => {
                ErrorCategory::Stability
            }
            Error::InternalConsistency(_)
            | Error::StaleSteadyState { .. }
            | Error::Conditioning(_)
            | Error::BasisConsistency { .. }
            | Error::Numerical(_) => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
