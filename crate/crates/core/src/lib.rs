//! Randomized quasi-Monte Carlo convergence laboratory.
//!
//! The crate bundles everything needed to measure and model RQMC convergence
//! rates for integrands with boundary singularities:
//!
//! * [`lds`] — Sobol' sequences with random linear scrambling and digital
//!   shifts, driven by external direction-number tables.
//! * [`gauss`] — normal density/CDF and two inverse-CDF routes.
//! * [`bound`] — the nonasymptotic error model: corner probabilities,
//!   boundary-growth exponents, and the assembled rate bound.
//! * [`integrands`] — the lognormal product integrand, a PDE-backed
//!   quantity-of-interest integrand, and two importance-sampling wrappers
//!   with pilot parameter optimizers.
//! * [`randomfield`] — Matérn covariance, a trigonometric spectral basis on
//!   an extended domain, and a file format for externally built bases.
//! * [`fem`] — a bilinear-element Dirichlet solver on the unit square's
//!   scaled sibling [-1,1]^2 with a smoothed-indicator quantity of interest.
//! * [`estimator`] — RQMC mean/RMSE estimation and log-log rate fitting.
//! * [`study`] — configuration-driven experiment runner with CSV outputs.

pub mod bound;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod gauss;
pub mod integrands;
pub mod lds;
pub mod randomfield;
pub mod study;

pub use error::{Error, Result};
