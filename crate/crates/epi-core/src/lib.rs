//! Numerical information theory on gridded one-dimensional densities.
//!
//! The crate provides four layers:
//!
//! - [`grid`]: densities sampled on uniform grids, with exact-step
//!   convolution, scaling and mixture constructors.
//! - [`functionals`]: differential entropy, entropy power, Fisher
//!   information, mutual information, doubling constant and the heat-flow
//!   residual, all in bits.
//! - [`channel`] / [`ib`]: the additive Gaussian channel `Y = sqrt(snr) X + Z`,
//!   Markov-valid auxiliary constructions on its output, and the alternating
//!   minimization solver for `inf I(Y;V) - lambda I(X;V)`.
//! - [`closed_form`] / [`suite`]: exact Gaussian reference arithmetic and a
//!   seeded corpus runner that verifies entropy-power inequalities and
//!   rate-region bounds, emitting CSV reports.

// `!(x > 0.0)` deliberately treats NaN as invalid; `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod closed_form;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod ib;
pub mod suite;

pub use error::{Error, Result};
pub use functionals::JointGrid;
pub use grid::{Grid, GridDensity, MixtureSpec};
