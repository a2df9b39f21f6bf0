//! Estimation toolkit for a single unknown qubit frequency probed by
//! repeated fixed-basis measurements.
//!
//! The crate provides:
//!
//! - [`posterior`]: an exact finite cosine-series Bayesian posterior with
//!   coefficient-space updates and closed-form moments;
//! - [`schemes`]: the waiting-time policies (fixed, uniformly spread,
//!   locally-optimal adaptive, and the offline locally-optimal non-adaptive
//!   sequence generator);
//! - [`fourier`]: the spectral-peak baseline estimator;
//! - [`simulator`]: seeded, reproducible Monte Carlo trials and ensembles;
//! - [`analysis`]: MSE curves, power/exponential scaling fits, and
//!   steps-to-threshold tables.

pub mod analysis;
pub mod error;
pub mod fourier;
pub mod posterior;
pub mod schemes;
pub mod simulator;

pub use error::{Error, Result};
pub use posterior::{Outcome, PosteriorCosineSeries};
