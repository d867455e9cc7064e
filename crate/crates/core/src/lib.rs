//! Bayesian Gaussian spatial regression.
//!
//! The crate fits hierarchical models of the form
//!
//! ```text
//! y = Xβ + Zα + ε,   α ~ N(0, K(θ)),   ε ~ N(0, D(θ))
//! ```
//!
//! with three samplers:
//!
//! * [`full_rank::fit_full_rank`]: Metropolis over θ with β and α integrated out;
//! * [`lowrank::fit_lowrank`]: a Gibbs sampler for (β, θ) under a knot-based
//!   predictive process, plain or modified;
//! * [`dynamic::fit_dynamic`]: a space-time state-space model with
//!   time-varying coefficients and per-step covariance parameters.
//!
//! β and the spatial effects are recovered afterwards by composition sampling
//! ([`recover`]) and new locations are predicted with [`predict`]. Every
//! covariance computation goes through Cholesky factors and triangular solves
//! in [`linalg`]; no explicit inverse is formed anywhere.

pub mod bessel;
pub mod covariance;
pub mod dynamic;
pub mod error;
pub mod full_rank;
pub mod linalg;
pub mod lowrank;
pub mod mcmc;
pub mod model;
pub mod par;
pub mod predict;
pub mod recover;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{CholFactor, DenseMatrix, LinalgError, Side};
pub use rng::RandomStream;
