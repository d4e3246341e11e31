//! Spectral-Galerkin time stepping for semilinear parabolic SPDEs
//!
//! ```text
//! dX_t = (A X_t + F(X_t)) dt + B(X_t) dW_t
//! ```
//!
//! driven by a trace-class Q-Wiener process whose noise does not need to
//! satisfy a commutativity condition. Everything is expressed in the
//! eigenbasis of `-A`, so the semigroup and its resolvent act diagonally.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the numerics only:
//!
//! - [`spectral`]: coefficient vectors, projections, semigroup, fractional norms.
//! - [`problem`]: SPDE instances, including the three sine-basis benchmark problems.
//! - [`noise`]: Brownian increments, truncated Fourier-series iterated integrals,
//!   chaining of fine packets onto coarser grids.
//! - [`schemes`]: derivative-free Milstein (DFM), Milstein (MIL), exponential
//!   Euler (EES) and linear implicit Euler (LIE) steppers.
//! - [`cost`]: closed-form cost model and an instrumented evaluation ledger.
//! - [`eoc`]: exact-rational effective order of convergence planner.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
mod exact;
mod linalg;

pub mod cost;
pub mod eoc;
pub mod noise;
pub mod problem;
pub mod schemes;
pub mod spectral;

pub use error::{Error, Result};
pub use exact::ceil_scaled_power;

/// Exact rational used for regularity exponents and planning.
pub type Rational = num_rational::Rational64;
