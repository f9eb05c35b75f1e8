//! Dilemma-zone mining and forecasting for single-lane roundabouts.

// Negated float comparisons are how NaN inputs get rejected; the numeric
// kernels index several parallel arrays per loop.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod deviation;
pub mod dilemma;
pub mod error;
pub mod forecaster;
pub mod geometry;
pub mod io;
pub mod maneuver;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod predictor;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
