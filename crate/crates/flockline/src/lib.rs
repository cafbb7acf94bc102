//! Event-driven simulation and numerical verification for a system of n
//! particles on the line that jump forward at rate `w(position - mean)`,
//! an attractive mean-field interaction through the center of mass.
//!
//! The crate provides:
//!
//! - exact stochastic simulation of the particle system in centered
//!   coordinates, with an O(log n) selection kernel for exponential
//!   rates ([`engine`]);
//! - the model primitives and standing-assumption checks ([`model`]);
//! - empirical-measure metrics (exact Wasserstein-1, Kolmogorov-Smirnov)
//!   and mean-field martingale residuals ([`measure`]);
//! - closed-form machinery for the exponential-exponential case: the
//!   Gumbel-type fixed point, its traveling wave, the driven auxiliary
//!   CDF, and the tagged nonlinear particle ([`meanfield`]);
//! - synchronous and coalescing couplings of tagged pairs and of whole
//!   systems ([`coupling`]);
//! - Lyapunov drifts, overshoot statistics, stationary sampling, and
//!   velocity/chaos estimators ([`diagnostics`]);
//! - a batch experiment runner with reproducible JSON/CSV outputs
//!   ([`experiments`]).

pub mod coupling;
pub mod diagnostics;
pub mod engine;
pub mod experiments;
pub mod fenwick;
pub mod meanfield;
pub mod measure;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod stats;

pub use engine::{
    init_state, run_until, simulate, EventRecord, InitSpec, RunResult, SimConfig, SystemState,
};
pub use meanfield::{GumbelFixedPoint, TravelingWave};
pub use measure::{wasserstein1, EmpiricalMeasure, LipschitzTestFn};
pub use model::{check_assumptions, JumpSpec, Model, RateSpec};
pub use rng::Rng;
