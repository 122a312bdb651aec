use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Box constraint `a ≤ f ≤ b` defining the subclass `D_{a,b}`.
///
/// `b` may be `+∞`; quantities depending on `V = log(b/a)` then refuse to
/// compute. In JSON an infinite `b` is written as `null` or omitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundsRepr<T>", into = "BoundsRepr<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BoundsAB<T> {
    a: T,
    b: T,
}

#[derive(Serialize, Deserialize)]
struct BoundsRepr<T> {
    a: T,
    #[serde(default)]
    b: Option<T>,
}

impl<T: Scalar> TryFrom<BoundsRepr<T>> for BoundsAB<T> {
    type Error = Error;

    fn try_from(repr: BoundsRepr<T>) -> Result<Self> {
        BoundsAB::new(repr.a, repr.b.unwrap_or_else(T::infinity))
    }
}

impl<T: Scalar> From<BoundsAB<T>> for BoundsRepr<T> {
    fn from(bounds: BoundsAB<T>) -> Self {
        BoundsRepr {
            a: bounds.a,
            b: bounds.b.is_finite().then_some(bounds.b),
        }
    }
}

impl<T: Scalar> BoundsAB<T> {
    pub fn new(a: T, b: T) -> Result<Self> {
        if !(a >= T::zero()) || !(b >= a) || a.is_infinite() {
            return Err(Error::Precondition(format!(
                "bounds must satisfy 0 <= a <= b, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// The whole class `D` (`a = 0`, `b = ∞`).
    pub fn unbounded() -> Self {
        Self {
            a: T::zero(),
            b: T::infinity(),
        }
    }

    #[inline]
    pub fn a(&self) -> T {
        self.a
    }

    #[inline]
    pub fn b(&self) -> T {
        self.b
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite()
    }

    /// `D_{a,b}` contains a density iff `a ≤ 1 ≤ b`.
    pub fn is_feasible(&self) -> bool {
        self.a <= T::one() && self.b >= T::one()
    }

    pub fn require_feasible(&self) -> Result<()> {
        if self.is_feasible() {
            Ok(())
        } else {
            Err(Error::Infeasible {
                a: self.a.as_f64(),
                b: self.b.as_f64(),
            })
        }
    }

    /// Requires `0 < a ≤ b < ∞`.
    pub fn require_strict(&self) -> Result<()> {
        if self.a > T::zero() && self.b.is_finite() {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "need 0 < a <= b < inf, got a = {}, b = {}",
                self.a, self.b
            )))
        }
    }

    /// `V = log(b/a)`, the log-height range of `D_{a,b}`.
    pub fn log_range(&self) -> Result<T> {
        self.require_strict()?;
        Ok((self.b / self.a).ln())
    }

    #[inline]
    pub fn contains(&self, x: T) -> bool {
        x >= self.a && x <= self.b
    }
}
