//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type the estimators are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Largest accepted `|∫f − 1|` for a histogram to count as a density.
    fn normalization_tol() -> Self;

    /// Absolute tolerance used by adaptive quadrature.
    fn quadrature_tol() -> Self;

    /// Converts an `f64` literal; panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn normalization_tol() -> Self {
        1e-9
    }

    fn quadrature_tol() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn normalization_tol() -> Self {
        2e-5
    }

    fn quadrature_tol() -> Self {
        1e-5
    }
}

/// `log Σ exp(xᵢ)` with max-shift; `−∞` entries are skipped.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let sum: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}
