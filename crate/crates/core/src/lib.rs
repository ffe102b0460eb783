//! Adaptive-decision readout of two-state systems.
//!
//! The crate is organised around the log-likelihood ratio `λ_t` between the
//! two hypotheses `|+⟩` and `|−⟩`:
//!
//! * [`decision`] holds the prior/threshold/posterior arithmetic shared by
//!   every readout model.
//! * [`gaussian`] and [`decay`] give closed-form error rates and average
//!   readout times for the idealized Gaussian latching and state-dependent
//!   decay readouts, together with simulators used as independent oracles.
//! * [`chargemodel`] is the exact likelihood engine for a hidden two-state
//!   Markov process with Poisson photon emission.
//! * [`montecarlo`] generates trajectories from that model and evaluates
//!   fixed-time and adaptive decision rules, producing error-rate versus
//!   average-time frontiers.
//! * [`counting`] is the analytic photon-counting baseline.
//! * [`calibration`] extracts model rates from raw count trajectories.
//!
//! The analytic code is generic over the floating point type through
//! [`Real`]; the simulators and fitting pipelines work in `f64`. The aliases
//! at the crate root name the common concrete instantiations.

pub mod calibration;
pub mod chargemodel;
pub mod counting;
pub mod decay;
pub mod decision;
mod error;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub use decision::{Decision, FrontierPoint, LogLikelihood, Priors, ReadoutRule, State, StopReason};

/// Rates of the hidden-Markov charge model in double precision.
pub type RateSet = chargemodel::RateSet<f64>;
/// Rates of the hidden-Markov charge model in single precision.
pub type RateSetF32 = chargemodel::RateSet<f32>;
/// Per-bin measurement matrices in double precision.
pub type UpdateMatrixSet = chargemodel::UpdateMatrixSet<f64>;
/// Per-bin measurement matrices in single precision.
pub type UpdateMatrixSetF32 = chargemodel::UpdateMatrixSet<f32>;
/// Normalized or log-scaled two-state vector in double precision.
pub type StateVector = chargemodel::StateVector<f64>;
/// Stopping thresholds in double precision.
pub type StoppingRule = decision::StoppingRule<f64>;
/// Gaussian latching readout model in double precision.
pub type GaussianModel = gaussian::GaussianModel<f64>;
/// Gaussian latching readout model in single precision.
pub type GaussianModelF32 = gaussian::GaussianModel<f32>;
/// State-dependent decay readout model in double precision.
pub type DecayModel = decay::DecayModel<f64>;

pub use chargemodel::Trajectory;
pub use montecarlo::{FrontierTable, SweepConfig};
