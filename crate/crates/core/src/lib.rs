//! Kiefer–Wolfowitz finite-difference stochastic approximation.
//!
//! The crate covers the decreasing-gain and fixed-gain recursions, stationary
//! noise generators with common-random-number pairing, a discontinuous
//! benchmark objective with closed-form expectations, a reference integrator
//! for the mean-field ODEs, and a Monte Carlo harness that measures empirical
//! convergence rates by log-log regression.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod engine;
mod error;
pub mod harness;
pub mod noise;
pub mod objective;
pub mod ode;
pub mod report;
pub mod schedules;
pub mod special;

pub use error::{Error, Result};
