//! Linearized grid dynamics, modal time-domain metrics and synthetic inertia placement.
//!
//! The crate is organised bottom-up:
//!
//! - [`netmodel`] turns a declarative case description into a state-space model
//!   `(A, B, C)` with synthetic inertia/damping devices attached.
//! - [`spectral`] computes biorthonormal eigen-decompositions and first-order
//!   eigen-sensitivities.
//! - [`response`] evaluates modal step responses, locates overshoot and RoCoF
//!   extrema and differentiates them with respect to device gains.
//! - [`capability`] fits norm balls to measurement clouds and dualises them into
//!   gain constraints.
//! - [`placement`] runs the sequential linear programming placement loop.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capability;
pub mod error;
pub mod netmodel;
pub mod placement;
pub mod response;
pub mod spectral;

pub use error::{Error, Result};

/// Complex scalar used throughout the modal computations.
pub type C64 = nalgebra::Complex<f64>;
