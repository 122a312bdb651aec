use serde::{Deserialize, Serialize};

use super::{CellClosure, Density, MonotoneHistogram};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed-form monotone densities used as simulation truths and static
/// calibrators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum ParametricDensity<T> {
    Uniform,
    /// `q(u) = δ₁ − (δ₁ − δ₀)·u`, with `δ₁ ≥ δ₀ ≥ 0` and `(δ₀ + δ₁)/2 = 1`.
    Linear {
        delta0: T,
        delta1: T,
    },
    /// `q(u) = 3(1 − u)²`.
    Quadratic,
    /// Non-increasing heights on equal-width bins.
    PiecewiseConstant {
        heights: Vec<T>,
    },
}

impl<T: Scalar> ParametricDensity<T> {
    pub fn linear(delta0: T, delta1: T) -> Result<Self> {
        let d = Self::Linear { delta0, delta1 };
        d.validate()?;
        Ok(d)
    }

    pub fn piecewise_constant(heights: Vec<T>) -> Result<Self> {
        let d = Self::PiecewiseConstant { heights };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform | Self::Quadratic => Ok(()),
            Self::Linear { delta0, delta1 } => {
                let (d0, d1) = (*delta0, *delta1);
                if !(d1 >= d0 && d0 >= T::zero()) {
                    return Err(Error::InvalidDensity(format!(
                        "linear density needs delta1 >= delta0 >= 0, got ({d0}, {d1})"
                    )));
                }
                if ((d0 + d1) / T::lit(2.0) - T::one()).abs() > T::normalization_tol() {
                    return Err(Error::InvalidDensity(format!(
                        "linear density needs (delta0 + delta1)/2 = 1, got ({d0}, {d1})"
                    )));
                }
                Ok(())
            }
            Self::PiecewiseConstant { heights } => self.as_histogram_parts(heights).map(|_| ()),
        }
    }

    fn as_histogram_parts(&self, heights: &[T]) -> Result<MonotoneHistogram<T>> {
        let m = heights.len();
        if m == 0 {
            return Err(Error::InvalidDensity(
                "piecewise-constant density needs bins".into(),
            ));
        }
        let mut breakpoints: Vec<T> = (0..m)
            .map(|i| T::from_usize(i).unwrap() / T::from_usize(m).unwrap())
            .collect();
        breakpoints.push(T::one());
        MonotoneHistogram::with_closure(breakpoints, heights.to_vec(), CellClosure::LeftClosed)
    }

    /// The equal-width histogram for `PiecewiseConstant`; `None` otherwise.
    pub fn to_histogram(&self) -> Option<MonotoneHistogram<T>> {
        match self {
            Self::PiecewiseConstant { heights } => self.as_histogram_parts(heights).ok(),
            Self::Uniform => Some(MonotoneHistogram::uniform()),
            _ => None,
        }
    }
}

impl<T: Scalar> Density<T> for ParametricDensity<T> {
    fn density(&self, u: T) -> T {
        let one = T::one();
        match self {
            Self::Uniform => one,
            Self::Linear { delta0, delta1 } => *delta1 - (*delta1 - *delta0) * u,
            Self::Quadratic => T::lit(3.0) * (one - u) * (one - u),
            Self::PiecewiseConstant { heights } => {
                let m = heights.len();
                let idx = (u * T::from_usize(m).unwrap())
                    .floor()
                    .to_usize()
                    .unwrap_or(0);
                heights[idx.min(m - 1)]
            }
        }
    }

    fn cdf(&self, u: T) -> T {
        let one = T::one();
        let u = u.max(T::zero()).min(one);
        match self {
            Self::Uniform => u,
            Self::Linear { delta0, delta1 } => {
                let slope = *delta1 - *delta0;
                *delta1 * u - slope * u * u / T::lit(2.0)
            }
            Self::Quadratic => one - (one - u).powi(3),
            Self::PiecewiseConstant { heights } => {
                let m = T::from_usize(heights.len()).unwrap();
                let mut acc = T::zero();
                for (i, &h) in heights.iter().enumerate() {
                    let left = T::from_usize(i).unwrap() / m;
                    let right = T::from_usize(i + 1).unwrap() / m;
                    if u >= right {
                        acc = acc + h / m;
                    } else {
                        if u > left {
                            acc = acc + h * (u - left);
                        }
                        break;
                    }
                }
                acc
            }
        }
    }

    fn inverse_cdf(&self, p: T) -> T {
        let one = T::one();
        let p = p.max(T::zero()).min(one);
        match self {
            Self::Uniform => p,
            Self::Linear { delta0, delta1 } => {
                // root of (s/2)u² − δ₁u + p = 0 in the cancellation-free form
                let slope = *delta1 - *delta0;
                let disc = (*delta1 * *delta1 - T::lit(2.0) * slope * p).max(T::zero());
                (T::lit(2.0) * p / (*delta1 + disc.sqrt())).min(one)
            }
            Self::Quadratic => one - (one - p).cbrt(),
            Self::PiecewiseConstant { heights } => self
                .as_histogram_parts(heights)
                .map(|h| h.inverse_cdf(p))
                .unwrap_or(T::nan()),
        }
    }

    fn knots(&self) -> Vec<T> {
        match self {
            Self::PiecewiseConstant { heights } => {
                let m = heights.len();
                (1..m)
                    .map(|i| T::from_usize(i).unwrap() / T::from_usize(m).unwrap())
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    fn neg_entropy(&self) -> T {
        match self {
            Self::Uniform => T::zero(),
            Self::Linear { delta0, delta1 } => {
                let slope = *delta1 - *delta0;
                if slope < T::lit(1e-4) {
                    // q = 1 + e with ∫e = ∫e³ = 0, ∫e² = s²/12, ∫e⁴ = s⁴/80
                    let s2 = slope * slope;
                    return s2 / T::lit(24.0) + s2 * s2 / T::lit(960.0);
                }
                let antiderivative = |v: T| {
                    if v <= T::zero() {
                        T::zero()
                    } else {
                        v * v * v.ln() / T::lit(2.0) - v * v / T::lit(4.0)
                    }
                };
                (antiderivative(*delta1) - antiderivative(*delta0)) / slope
            }
            Self::Quadratic => T::lit(3.0).ln() - T::lit(2.0) / T::lit(3.0),
            Self::PiecewiseConstant { heights } => {
                let m = T::from_usize(heights.len()).unwrap();
                heights
                    .iter()
                    .filter(|&&h| h > T::zero())
                    .map(|&h| h * h.ln() / m)
                    .sum()
            }
        }
    }

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_value_at_zero_is_delta1() {
        let q = ParametricDensity::linear(0.75, 1.25).unwrap();
        assert_eq!(q.evaluate(0.0).unwrap(), 1.25);
        assert_eq!(q.evaluate(1.0).unwrap(), 0.75);
    }

    #[test]
    fn uniform_is_identity_under_inverse_cdf() {
        let u = ParametricDensity::<f64>::Uniform;
        assert_eq!(u.evaluate(0.37).unwrap(), 1.0);
        assert_eq!(u.inverse_cdf(0.3), 0.3);
    }

    #[test]
    fn quadratic_inverse_cdf() {
        let q = ParametricDensity::<f64>::Quadratic;
        assert!((q.inverse_cdf(0.875) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_rejects_invalid_parameters() {
        assert!(ParametricDensity::linear(1.5, 0.5).is_err());
        assert!(ParametricDensity::linear(0.5, 1.0).is_err());
        assert!(ParametricDensity::linear(-0.5, 2.5).is_err());
        assert!(ParametricDensity::linear(0.0, 2.0).is_ok());
    }

    #[test]
    fn piecewise_constant_bins() {
        let q = ParametricDensity::piecewise_constant(vec![1.25, 13.0 / 12.0, 11.0 / 12.0, 0.75])
            .unwrap();
        assert_eq!(q.density(0.25), 13.0 / 12.0);
        assert_eq!(q.density(1.0), 0.75);
        assert!((q.cdf(0.5) - (1.25 + 13.0 / 12.0) / 4.0_f64).abs() < 1e-15);
        assert!(ParametricDensity::piecewise_constant(vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn linear_neg_entropy_series_branch_is_continuous() {
        let eps = 1e-4;
        let below = ParametricDensity::Linear {
            delta0: 1.0 - eps / 2.0 * 0.999,
            delta1: 1.0 + eps / 2.0 * 0.999,
        };
        let above = ParametricDensity::Linear {
            delta0: 1.0 - eps / 2.0 * 1.001,
            delta1: 1.0 + eps / 2.0 * 1.001,
        };
        let (x, y) = (below.neg_entropy(), above.neg_entropy());
        assert!(f64::abs(x - y) < 1e-11, "{x} vs {y}");
    }

    #[test]
    fn serde_uses_variant_tags() {
        let q: ParametricDensity<f64> =
            serde_json::from_str(r#"{"type":"linear","delta0":0.5,"delta1":1.5}"#).unwrap();
        assert_eq!(
            q,
            ParametricDensity::Linear {
                delta0: 0.5,
                delta1: 1.5
            }
        );
        let q: ParametricDensity<f64> = serde_json::from_str(r#"{"type":"quadratic"}"#).unwrap();
        assert_eq!(q, ParametricDensity::Quadratic);
    }
}
