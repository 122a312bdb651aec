use serde::{Deserialize, Serialize};

use super::histogram::merged_breakpoints;
use super::quadrature::integrate_piecewise;
use super::{Density, DensityModel, MonotoneHistogram};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `KL(f‖g) = ∫ f log(f/g)`.
    Kl,
    /// Squared Hellinger distance `½ ∫ (√f − √g)²`.
    HellingerSq,
    /// Squared L2 distance `∫ (f − g)²`.
    L2Sq,
}

#[inline]
fn pointwise<T: Scalar>(metric: Metric, f: T, g: T) -> T {
    match metric {
        Metric::Kl => {
            if f <= T::zero() {
                T::zero()
            } else if g <= T::zero() {
                T::infinity()
            } else {
                f * (f / g).ln()
            }
        }
        Metric::HellingerSq => {
            let d = f.sqrt() - g.sqrt();
            d * d / T::lit(2.0)
        }
        Metric::L2Sq => (f - g) * (f - g),
    }
}

/// Exact divergence between two histograms, summed over the common
/// refinement of their breakpoints. KL is `+∞` when `g` vanishes on a cell
/// where `f` does not.
pub fn histogram_divergence<T: Scalar>(
    f: &MonotoneHistogram<T>,
    g: &MonotoneHistogram<T>,
    metric: Metric,
) -> T {
    let grid = merged_breakpoints(f.breakpoints(), g.breakpoints());
    grid.windows(2)
        .map(|w| {
            let mid = (w[0] + w[1]) / T::lit(2.0);
            pointwise(metric, f.density(mid), g.density(mid)) * (w[1] - w[0])
        })
        .sum()
}

/// Divergence between arbitrary densities: exact for histogram pairs,
/// adaptive quadrature (absolute tolerance [`Scalar::quadrature_tol`])
/// otherwise, split at the knots of both arguments.
pub fn divergence<T: Scalar>(f: &DensityModel<T>, g: &DensityModel<T>, metric: Metric) -> T {
    if let (DensityModel::Histogram(fh), DensityModel::Histogram(gh)) = (f, g) {
        return histogram_divergence(fh, gh, metric);
    }
    quadrature_divergence(f, g, metric)
}

/// Divergence by quadrature regardless of representation.
pub fn quadrature_divergence<T: Scalar, F: Density<T> + ?Sized, G: Density<T> + ?Sized>(
    f: &F,
    g: &G,
    metric: Metric,
) -> T {
    let mut knots = vec![T::zero()];
    knots.extend(merged_breakpoints(&f.knots(), &g.knots()));
    knots.push(T::one());
    knots.dedup();
    integrate_piecewise(
        |u| pointwise(metric, f.density(u), g.density(u)),
        &knots,
        T::quadrature_tol(),
    )
}

/// `KL(q‖h)` for a histogram `h`, in closed form:
/// `∫ q log q − Σ_j Q(cell_j) log θ_j`, where `Q(cell_j)` is the
/// `q`-mass of cell `j`.
pub fn kl_to_histogram<T: Scalar, D: Density<T> + ?Sized>(q: &D, h: &MonotoneHistogram<T>) -> T {
    let bps = h.breakpoints();
    let mut cross = T::zero();
    let mut prev = T::zero();
    for (j, &theta) in h.heights().iter().enumerate() {
        let next = if j + 1 == h.num_cells() {
            T::one()
        } else {
            q.cdf(bps[j + 1])
        };
        let mass = next - prev;
        prev = next;
        if mass <= T::zero() {
            continue;
        }
        if theta <= T::zero() {
            return T::infinity();
        }
        cross = cross + mass * theta.ln();
    }
    (q.neg_entropy() - cross).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::ParametricDensity;

    fn hist(bps: &[f64], hs: &[f64]) -> MonotoneHistogram<f64> {
        MonotoneHistogram::new(bps.to_vec(), hs.to_vec()).unwrap()
    }

    #[test]
    fn identical_densities_have_zero_divergence() {
        let f = DensityModel::Histogram(hist(&[0.0, 0.5, 1.0], &[1.5, 0.5]));
        for m in [Metric::Kl, Metric::HellingerSq, Metric::L2Sq] {
            assert_eq!(divergence(&f, &f, m), 0.0);
        }
        let q = DensityModel::Parametric(ParametricDensity::linear(0.5, 1.5).unwrap());
        for m in [Metric::Kl, Metric::HellingerSq, Metric::L2Sq] {
            assert!(f64::abs(divergence(&q, &q, m)) < 1e-12);
        }
    }

    #[test]
    fn two_step_against_uniform() {
        let f = DensityModel::Histogram(hist(&[0.0, 0.5, 1.0], &[1.5, 0.5]));
        let u = DensityModel::Histogram(MonotoneHistogram::uniform());
        let expected = 0.5 * 1.5 * 1.5f64.ln() + 0.5 * 0.5 * 0.5f64.ln();
        assert!((divergence(&f, &u, Metric::Kl) - expected).abs() < 1e-15);
        assert!((expected - 0.130_812).abs() < 1e-6);
    }

    #[test]
    fn kl_is_infinite_when_support_is_lost() {
        let f = hist(&[0.0, 1.0], &[1.0]);
        let g = hist(&[0.0, 0.5, 1.0], &[2.0, 0.0]);
        assert!(histogram_divergence(&f, &g, Metric::Kl).is_infinite());
        assert!(kl_to_histogram(&f, &g).is_infinite());
        assert!(histogram_divergence(&g, &f, Metric::Kl).is_finite());
    }

    #[test]
    fn closed_form_kl_matches_quadrature() {
        let q = ParametricDensity::linear(0.5, 1.5).unwrap();
        let h = hist(&[0.0, 0.2, 0.7, 1.0], &[1.6, 1.06, 0.5]);
        let closed = kl_to_histogram(&q, &h);
        let quad = quadrature_divergence(&q, &h, Metric::Kl);
        assert!((closed - quad).abs() < 1e-9, "{closed} vs {quad}");
    }
}
