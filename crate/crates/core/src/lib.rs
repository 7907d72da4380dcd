//! Random walks and branching processes in stationary Gaussian environments
//! with long-range dependence.
//!
//! The crate samples environments exactly ([`envgen`]), evaluates quenched
//! hitting and persistence probabilities ([`walk`]), simulates the associated
//! critical branching process ([`bpcge`]), evaluates first-passage functionals
//! of the potential ([`passage`]) and estimates tail exponents by Monte Carlo
//! ([`mc`]).

pub mod bpcge;
#[cfg(feature = "cli")]
pub mod cli;
pub mod covariance;
pub mod envgen;
pub mod error;
pub mod mc;
pub mod numerics;
pub mod passage;
pub mod seed;
pub mod walk;

pub use covariance::{CovarianceModel, Family};
pub use envgen::{build_environment, sample_noise, Environment, NoiseSampler};
pub use error::{Error, Result};
