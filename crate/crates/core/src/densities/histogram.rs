use serde::{Deserialize, Serialize};

use super::{BoundsAB, Density};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which end of each cell is closed.
///
/// `LeftClosed` cells are `[t_{j-1}, t_j)` with the last cell closed at 1;
/// this is the convention of the expert grid. `RightClosed` cells are
/// `(t_{j-1}, t_j]` with the first cell closed at 0, i.e. the left-continuous
/// version of the same step function, which is how maximum-likelihood fits
/// assign the higher height to an observation sitting on a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClosure {
    #[default]
    LeftClosed,
    RightClosed,
}

impl CellClosure {
    fn is_default(&self) -> bool {
        *self == CellClosure::LeftClosed
    }
}

/// Piecewise-constant non-increasing density on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramRepr<T>", into = "HistogramRepr<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MonotoneHistogram<T> {
    breakpoints: Vec<T>,
    heights: Vec<T>,
    closure: CellClosure,
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr<T> {
    breakpoints: Vec<T>,
    heights: Vec<T>,
    #[serde(default, skip_serializing_if = "CellClosure::is_default")]
    cells: CellClosure,
}

impl<T: Scalar> TryFrom<HistogramRepr<T>> for MonotoneHistogram<T> {
    type Error = Error;

    fn try_from(repr: HistogramRepr<T>) -> Result<Self> {
        MonotoneHistogram::with_closure(repr.breakpoints, repr.heights, repr.cells)
    }
}

impl<T: Scalar> From<MonotoneHistogram<T>> for HistogramRepr<T> {
    fn from(h: MonotoneHistogram<T>) -> Self {
        HistogramRepr {
            breakpoints: h.breakpoints,
            heights: h.heights,
            cells: h.closure,
        }
    }
}

/// Outcome of checking raw histogram parts against `D_{a,b}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport<T> {
    /// Set when the breakpoints themselves are malformed; other fields are
    /// then only partially meaningful.
    pub structural: Option<String>,
    /// Cells `j` (0-based) with `heights[j] > heights[j-1]`.
    pub monotonicity_violations: Vec<usize>,
    /// `∫ f − 1`.
    pub normalization_residual: T,
    /// Cells (0-based) with height below `a`.
    pub lower_violations: Vec<usize>,
    /// Cells (0-based) with height above `b`.
    pub upper_violations: Vec<usize>,
}

impl<T: Scalar> MembershipReport<T> {
    pub fn is_monotone(&self) -> bool {
        self.monotonicity_violations.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization_residual.abs() <= T::normalization_tol()
    }

    pub fn is_valid(&self) -> bool {
        self.structural.is_none()
            && self.is_monotone()
            && self.is_normalized()
            && self.lower_violations.is_empty()
            && self.upper_violations.is_empty()
    }
}

fn structural_problem<T: Scalar>(breakpoints: &[T], heights: &[T]) -> Option<String> {
    if heights.is_empty() {
        return Some("histogram needs at least one cell".into());
    }
    if breakpoints.len() != heights.len() + 1 {
        return Some(format!(
            "{} breakpoints for {} cells",
            breakpoints.len(),
            heights.len()
        ));
    }
    if breakpoints[0] != T::zero() || breakpoints[breakpoints.len() - 1] != T::one() {
        return Some("breakpoints must start at 0 and end at 1".into());
    }
    if let Some(i) = breakpoints.windows(2).position(|w| !(w[0] < w[1])) {
        return Some(format!(
            "breakpoints not strictly increasing at index {}",
            i + 1
        ));
    }
    if let Some(j) = heights
        .iter()
        .position(|h| !(*h >= T::zero()) || h.is_infinite())
    {
        return Some(format!("height {j} is negative or not finite"));
    }
    None
}

/// Checks raw parts for monotonicity, normalization and the box `[a, b]`.
pub fn validate_parts<T: Scalar>(
    breakpoints: &[T],
    heights: &[T],
    bounds: &BoundsAB<T>,
) -> MembershipReport<T> {
    let structural = structural_problem(breakpoints, heights);
    let monotonicity_violations = (1..heights.len())
        .filter(|&j| heights[j] > heights[j - 1])
        .collect();
    let mass = if breakpoints.len() == heights.len() + 1 {
        heights
            .iter()
            .zip(breakpoints.windows(2))
            .map(|(&h, w)| h * (w[1] - w[0]))
            .sum::<T>()
    } else {
        T::nan()
    };
    MembershipReport {
        structural,
        monotonicity_violations,
        normalization_residual: mass - T::one(),
        lower_violations: (0..heights.len())
            .filter(|&j| heights[j] < bounds.a())
            .collect(),
        upper_violations: (0..heights.len())
            .filter(|&j| heights[j] > bounds.b())
            .collect(),
    }
}

impl<T: Scalar> MonotoneHistogram<T> {
    /// Left-closed histogram; fails unless the parts form a monotone density.
    pub fn new(breakpoints: Vec<T>, heights: Vec<T>) -> Result<Self> {
        Self::with_closure(breakpoints, heights, CellClosure::LeftClosed)
    }

    pub fn with_closure(
        breakpoints: Vec<T>,
        heights: Vec<T>,
        closure: CellClosure,
    ) -> Result<Self> {
        let report = validate_parts(&breakpoints, &heights, &BoundsAB::unbounded());
        if let Some(problem) = report.structural {
            return Err(Error::InvalidDensity(problem));
        }
        if !report.monotonicity_violations.is_empty() {
            return Err(Error::InvalidDensity(format!(
                "heights increase at cells {:?}",
                report.monotonicity_violations
            )));
        }
        if !(report.normalization_residual.abs() <= T::normalization_tol()) {
            return Err(Error::InvalidDensity(format!(
                "integrates to 1 + {}",
                report.normalization_residual
            )));
        }
        Ok(Self {
            breakpoints,
            heights,
            closure,
        })
    }

    /// Rescales `heights` so the histogram integrates to exactly 1 (up to
    /// rounding) and validates the result. Zero-width cells are dropped.
    pub fn normalized(breakpoints: Vec<T>, heights: Vec<T>, closure: CellClosure) -> Result<Self> {
        if breakpoints.len() != heights.len() + 1 {
            return Err(Error::InvalidDensity(format!(
                "{} breakpoints for {} cells",
                breakpoints.len(),
                heights.len()
            )));
        }
        let (breakpoints, heights) = drop_empty_cells(breakpoints, heights);
        let mass: T = heights
            .iter()
            .zip(breakpoints.windows(2))
            .map(|(&h, w)| h * (w[1] - w[0]))
            .sum();
        if !(mass > T::zero()) || mass.is_infinite() {
            return Err(Error::InvalidDensity(format!(
                "cannot normalize mass {mass}"
            )));
        }
        let heights = heights.into_iter().map(|h| h / mass).collect();
        Self::with_closure(breakpoints, heights, closure)
    }

    /// The uniform density as a single cell.
    pub fn uniform() -> Self {
        Self {
            breakpoints: vec![T::zero(), T::one()],
            heights: vec![T::one()],
            closure: CellClosure::LeftClosed,
        }
    }

    #[inline]
    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    #[inline]
    pub fn heights(&self) -> &[T] {
        &self.heights
    }

    #[inline]
    pub fn closure(&self) -> CellClosure {
        self.closure
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.heights.len()
    }

    pub fn widths(&self) -> impl Iterator<Item = T> + '_ {
        self.breakpoints.windows(2).map(|w| w[1] - w[0])
    }

    pub fn mass(&self) -> T {
        self.heights
            .iter()
            .zip(self.widths())
            .map(|(&h, w)| h * w)
            .sum()
    }

    /// Same function with a different cell convention.
    pub fn with_cells(mut self, closure: CellClosure) -> Self {
        self.closure = closure;
        self
    }

    /// Index of the cell containing `u`, clamped to `[0, 1]`.
    #[inline]
    pub fn cell_index(&self, u: T) -> usize {
        let interior = &self.breakpoints[1..self.breakpoints.len() - 1];
        match self.closure {
            CellClosure::LeftClosed => interior.partition_point(|&t| t <= u),
            CellClosure::RightClosed => interior.partition_point(|&t| t < u),
        }
    }

    /// Largest `|log f − log g|` over `[0,1]` for two histograms sharing a
    /// cell convention; evaluated on every cell of the common refinement and
    /// at every knot.
    pub fn sup_log_distance(&self, other: &Self) -> T {
        let mut grid = merged_breakpoints(&self.breakpoints, &other.breakpoints);
        let knots = grid.clone();
        grid.extend(knots.windows(2).map(|w| (w[0] + w[1]) / T::lit(2.0)));
        grid.iter()
            .map(|&u| (self.density(u).ln() - other.density(u).ln()).abs())
            .map(|d| if d.is_nan() { T::zero() } else { d })
            .fold(T::zero(), T::max)
    }

    /// Merges adjacent cells whose heights agree within `rel_tol`.
    pub fn canonical(&self, rel_tol: T) -> Self {
        let mut breakpoints = vec![T::zero()];
        let mut heights: Vec<T> = Vec::with_capacity(self.heights.len());
        for (j, &h) in self.heights.iter().enumerate() {
            match heights.last() {
                Some(&prev) if (prev - h).abs() <= rel_tol * prev.abs().max(h.abs()) => {
                    *breakpoints.last_mut().unwrap() = self.breakpoints[j + 1];
                }
                _ => {
                    heights.push(h);
                    breakpoints.push(self.breakpoints[j + 1]);
                }
            }
        }
        Self {
            breakpoints,
            heights,
            closure: self.closure,
        }
    }

    /// Membership report against `D_{a,b}`.
    pub fn validate(&self, bounds: &BoundsAB<T>) -> MembershipReport<T> {
        validate_parts(&self.breakpoints, &self.heights, bounds)
    }

    /// Cumulative masses `C_0 = 0, C_1, …, C_r`.
    pub fn cumulative_masses(&self) -> Vec<T> {
        let mut acc = T::zero();
        std::iter::once(T::zero())
            .chain(self.heights.iter().zip(self.widths()).map(|(&h, w)| {
                acc = acc + h * w;
                acc
            }))
            .collect()
    }

    /// Log-likelihood `Σ log f(x_i)` of a sample; `−∞` if any point has zero density.
    pub fn log_likelihood(&self, xs: &[T]) -> T {
        xs.iter().map(|&x| self.density(x).ln()).sum()
    }
}

impl<T: Scalar> Density<T> for MonotoneHistogram<T> {
    #[inline]
    fn density(&self, u: T) -> T {
        self.heights[self.cell_index(u)]
    }

    fn cdf(&self, u: T) -> T {
        if u <= T::zero() {
            return T::zero();
        }
        if u >= T::one() {
            return T::one();
        }
        let j = self.cell_index(u);
        let below: T = self.heights[..j]
            .iter()
            .zip(self.widths())
            .map(|(&h, w)| h * w)
            .sum();
        below + self.heights[j] * (u - self.breakpoints[j])
    }

    fn inverse_cdf(&self, p: T) -> T {
        if p <= T::zero() {
            return T::zero();
        }
        let cum = self.cumulative_masses();
        let last = self.heights.len();
        let j = cum[1..].partition_point(|&c| c < p).min(last - 1);
        let h = self.heights[j];
        if h <= T::zero() {
            return self.breakpoints[j];
        }
        let x = self.breakpoints[j] + (p - cum[j]) / h;
        x.max(self.breakpoints[j]).min(self.breakpoints[j + 1])
    }

    fn knots(&self) -> Vec<T> {
        self.breakpoints[1..self.breakpoints.len() - 1].to_vec()
    }

    fn neg_entropy(&self) -> T {
        self.heights
            .iter()
            .zip(self.widths())
            .filter(|(&h, _)| h > T::zero())
            .map(|(&h, w)| h * h.ln() * w)
            .sum()
    }
}

fn drop_empty_cells<T: Scalar>(breakpoints: Vec<T>, heights: Vec<T>) -> (Vec<T>, Vec<T>) {
    let mut bps = vec![breakpoints[0]];
    let mut hs = Vec::with_capacity(heights.len());
    for (j, h) in heights.into_iter().enumerate() {
        if breakpoints[j + 1] > *bps.last().unwrap() {
            bps.push(breakpoints[j + 1]);
            hs.push(h);
        }
    }
    (bps, hs)
}

/// Sorted union of two breakpoint sets.
pub(crate) fn merged_breakpoints<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(&x), Some(&y)) if y < x => {
                j += 1;
                y
            }
            (Some(&x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if out.last() != Some(&next) {
            out.push(next);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_step() -> MonotoneHistogram<f64> {
        MonotoneHistogram::new(vec![0.0, 0.5, 1.0], vec![1.5, 0.5]).unwrap()
    }

    #[test]
    fn half_open_cells_put_knot_in_right_cell() {
        let h = two_step();
        assert_eq!(h.evaluate(0.5).unwrap(), 0.5);
        assert_eq!(h.evaluate(0.0).unwrap(), 1.5);
        assert_eq!(h.evaluate(1.0).unwrap(), 0.5);
        let left_cont = h.clone().with_cells(CellClosure::RightClosed);
        assert_eq!(left_cont.evaluate(0.5).unwrap(), 1.5);
        assert_eq!(left_cont.evaluate(0.0).unwrap(), 1.5);
        assert_eq!(left_cont.evaluate(1.0).unwrap(), 0.5);
    }

    #[test]
    fn evaluate_rejects_points_outside_unit_interval() {
        let h = two_step();
        assert!(matches!(h.evaluate(1.2), Err(Error::Domain { .. })));
        assert!(h.evaluate(-1e-12).is_err());
    }

    #[test]
    fn inverse_cdf_of_two_step_histogram() {
        let h = two_step();
        assert!((h.inverse_cdf(0.75) - 0.5).abs() < 1e-15);
        assert_eq!(h.inverse_cdf(0.0), 0.0);
        assert!((h.inverse_cdf(0.875) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn inverse_cdf_skips_zero_height_tail() {
        let h = MonotoneHistogram::new(vec![0.0, 0.5, 1.0], vec![2.0, 0.0]).unwrap();
        assert!((h.inverse_cdf(0.999999) - 0.4999995_f64).abs() < 1e-12);
        assert!(h.inverse_cdf(1.0) <= 0.5);
    }

    #[test]
    fn validate_reports_offending_indices() {
        let unbounded = BoundsAB::unbounded();
        let r = validate_parts(&[0.0, 0.5, 1.0], &[0.5, 1.5], &unbounded);
        assert!(!r.is_valid());
        assert_eq!(r.monotonicity_violations, vec![1]);

        let box_ = BoundsAB::new(0.6, 2.0).unwrap();
        let r = two_step().validate(&box_);
        assert_eq!(r.lower_violations, vec![1]);
        assert!(r.upper_violations.is_empty());
        assert!(r.is_monotone() && r.is_normalized());

        let r = MonotoneHistogram::<f64>::uniform().validate(&BoundsAB::new(0.5, 2.0).unwrap());
        assert!(r.is_valid());
    }

    #[test]
    fn construction_rejects_bad_parts() {
        assert!(MonotoneHistogram::new(vec![0.0, 0.5, 1.0], vec![0.5, 1.5]).is_err());
        assert!(MonotoneHistogram::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.5]).is_err());
        assert!(MonotoneHistogram::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(MonotoneHistogram::new(vec![0.1, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn normalized_rescales_and_drops_empty_cells() {
        let h = MonotoneHistogram::normalized(
            vec![0.0, 0.5, 0.5, 1.0],
            vec![3.0, 2.0, 1.0],
            CellClosure::LeftClosed,
        )
        .unwrap();
        assert_eq!(h.breakpoints(), &[0.0, 0.5, 1.0]);
        assert!((h.heights()[0] - 1.5_f64).abs() < 1e-15);
        assert!((h.mass() - 1.0_f64).abs() < 1e-15);
    }

    #[test]
    fn canonical_merges_equal_neighbours() {
        let h = MonotoneHistogram::new(vec![0.0, 0.25, 0.5, 1.0], vec![2.0, 2.0, 0.0]).unwrap();
        let c = h.canonical(1e-12);
        assert_eq!(c.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(c.heights(), &[2.0, 0.0]);
    }

    #[test]
    fn json_round_trip_keeps_default_shape() {
        let h = two_step();
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(text, r#"{"breakpoints":[0.0,0.5,1.0],"heights":[1.5,0.5]}"#);
        let back: MonotoneHistogram<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, h);
        let bad = serde_json::from_str::<MonotoneHistogram<f64>>(
            r#"{"breakpoints":[0.0,0.5,1.0],"heights":[0.5,1.5]}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn merged_breakpoints_is_sorted_union() {
        let m = merged_breakpoints(&[0.0, 0.3, 1.0], &[0.0, 0.2, 0.3, 1.0]);
        assert_eq!(m, vec![0.0, 0.2, 0.3, 1.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let h = MonotoneHistogram::<f32>::new(vec![0.0, 0.5, 1.0], vec![1.5, 0.5]).unwrap();
        assert_eq!(h.density(0.25), 1.5);
        assert!((h.cdf(0.5) - 0.75).abs() < 1e-6);
    }
}
