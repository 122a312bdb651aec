//! Online estimation of monotone densities on `[0, 1]` and its use for
//! calibrating p-values into e-values.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod densities;
pub mod error;
pub mod evaluation;
pub mod experts;
pub mod grenander;
pub mod online;
pub mod scalar;
pub mod seeding;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Histogram = densities::MonotoneHistogram<f64>;
pub type Bounds = densities::BoundsAB<f64>;
pub type Parametric = densities::ParametricDensity<f64>;
pub type Model = densities::DensityModel<f64>;
