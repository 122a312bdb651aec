//! Monotone densities on `[0, 1]`: histograms, closed-form models,
//! sampling and divergences.

mod bounds;
mod divergence;
mod histogram;
mod parametric;
pub mod quadrature;

use serde::{Deserialize, Serialize};

pub use bounds::BoundsAB;
pub use divergence::{
    divergence, histogram_divergence, kl_to_histogram, quadrature_divergence, Metric,
};
pub use histogram::{validate_parts, CellClosure, MembershipReport, MonotoneHistogram};
pub use parametric::ParametricDensity;

use crate::error::{check_unit, Result};
use crate::scalar::Scalar;

/// Common interface of every density on `[0, 1]`.
pub trait Density<T: Scalar> {
    /// Density value; arguments outside `[0, 1]` are clamped by the
    /// implementation's cell convention.
    fn density(&self, u: T) -> T;

    fn cdf(&self, u: T) -> T;

    /// Generalized inverse of the CDF, monotone in `p`.
    fn inverse_cdf(&self, p: T) -> T;

    /// Interior points where the density is not smooth.
    fn knots(&self) -> Vec<T>;

    /// `∫ f log f`.
    fn neg_entropy(&self) -> T;

    /// Structural validity of the density.
    fn check(&self) -> Result<()> {
        Ok(())
    }

    /// Density value with a domain check on `u`.
    fn evaluate(&self, u: T) -> Result<T> {
        check_unit(u.as_f64())?;
        Ok(self.density(u))
    }

    #[inline]
    fn log_density(&self, u: T) -> T {
        self.density(u).ln()
    }
}

/// Any supported density, as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum DensityModel<T> {
    Parametric(ParametricDensity<T>),
    Histogram(MonotoneHistogram<T>),
}

impl<T: Scalar> DensityModel<T> {
    pub fn uniform() -> Self {
        DensityModel::Parametric(ParametricDensity::Uniform)
    }

    /// Histogram form when the model is piecewise constant.
    pub fn as_histogram(&self) -> Option<MonotoneHistogram<T>> {
        match self {
            DensityModel::Histogram(h) => Some(h.clone()),
            DensityModel::Parametric(p) => p.to_histogram(),
        }
    }
}

impl<T: Scalar> From<ParametricDensity<T>> for DensityModel<T> {
    fn from(p: ParametricDensity<T>) -> Self {
        DensityModel::Parametric(p)
    }
}

impl<T: Scalar> From<MonotoneHistogram<T>> for DensityModel<T> {
    fn from(h: MonotoneHistogram<T>) -> Self {
        DensityModel::Histogram(h)
    }
}

macro_rules! forward {
    ($self:ident, $d:ident => $e:expr) => {
        match $self {
            DensityModel::Parametric($d) => $e,
            DensityModel::Histogram($d) => $e,
        }
    };
}

impl<T: Scalar> Density<T> for DensityModel<T> {
    fn density(&self, u: T) -> T {
        forward!(self, d => d.density(u))
    }

    fn cdf(&self, u: T) -> T {
        forward!(self, d => d.cdf(u))
    }

    fn inverse_cdf(&self, p: T) -> T {
        forward!(self, d => d.inverse_cdf(p))
    }

    fn knots(&self) -> Vec<T> {
        forward!(self, d => d.knots())
    }

    fn neg_entropy(&self) -> T {
        forward!(self, d => d.neg_entropy())
    }

    fn check(&self) -> Result<()> {
        forward!(self, d => d.check())
    }
}

/// Draws `F⁻¹(u01)` after validating `d`.
pub fn inverse_cdf_sample<T: Scalar, D: Density<T> + ?Sized>(d: &D, u01: T) -> Result<T> {
    d.check()?;
    check_unit(u01.as_f64())?;
    Ok(d.inverse_cdf(u01))
}
