//! Classical and quantum analysis of two cascaded four-wave-mixing processes
//! sharing a pair of pumped modes inside an optical cavity.
//!
//! The pipeline runs [`params`] → [`steady_state`] → [`linearization`] →
//! [`spectra`] → [`vlf`], with [`oracle`] providing an independent stochastic
//! check on the linearized fluctuations.

// `!(x < tol)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod params;
pub mod steady_state;
pub mod vlf;
pub mod linearization;
pub mod oracle;
pub mod spectra;

mod ode;
mod precise;
mod quadrature;

pub use error::{Error, ErrorCategory, Result};
pub use params::{
    classify_regime, compute_thresholds, Coupling, Damping, EpsilonSpec, Mode, Regime, SystemParams, Thresholds,
    N_MODES, STATE_DIM,
};
pub use linearization::{stationary_covariance, FluctuationModel, StabilityReport, Verdict};
pub use spectra::QuadratureSpectrum;
pub use steady_state::{analytic_steady_states, Branch, SteadyState};
pub use vlf::{SweepOptions, SymmetryClass, VlfInequality, VlfLabel, VlfResult};
