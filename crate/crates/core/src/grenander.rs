//! Offline Grenander fits (unconstrained and box-constrained) and the two
//! histogram reductions used to compare a fit against the expert grid:
//! compression to few well-separated bins and rounding onto the grid.

use crate::densities::{BoundsAB, CellClosure, Density, MonotoneHistogram};
use crate::error::{check_unit, Error, Result};
use crate::experts::ExpertGridParams;
use crate::scalar::Scalar;

/// Distinct sorted sample values with multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCells<T> {
    values: Vec<T>,
    counts: Vec<u64>,
    total: u64,
}

impl<T: Scalar> Default for WeightedCells<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Scalar> WeightedCells<T> {
    pub fn empty() -> Self {
        Self {
            values: Vec::new(),
            counts: Vec::new(),
            total: 0,
        }
    }

    /// From already grouped data; values must be strictly increasing in
    /// `[0, 1]` with positive counts.
    pub fn new(values: Vec<T>, counts: Vec<u64>) -> Result<Self> {
        if values.len() != counts.len() {
            return Err(Error::Precondition(format!(
                "{} values but {} counts",
                values.len(),
                counts.len()
            )));
        }
        for &v in &values {
            check_unit(v.as_f64())?;
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition(
                "values must be strictly increasing".into(),
            ));
        }
        if counts.contains(&0) {
            return Err(Error::Precondition("counts must be at least 1".into()));
        }
        let total = counts.iter().sum();
        Ok(Self {
            values,
            counts,
            total,
        })
    }

    pub fn from_sample(xs: &[T]) -> Result<Self> {
        let mut cells = Self::empty();
        for &x in xs {
            cells.push(x)?;
        }
        Ok(cells)
    }

    /// Adds one observation.
    pub fn push(&mut self, x: T) -> Result<()> {
        check_unit(x.as_f64())?;
        let i = self.values.partition_point(|&v| v < x);
        if i < self.values.len() && self.values[i] == x {
            self.counts[i] += 1;
        } else {
            self.values.insert(i, x);
            self.counts.insert(i, 1);
        }
        self.total += 1;
        Ok(())
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sample size `n`.
    #[inline]
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct values.
    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> Option<T> {
        self.values.last().copied()
    }

    /// `Σ n_j log f(x_j)`.
    pub fn log_likelihood<D: Density<T> + ?Sized>(&self, f: &D) -> T {
        self.values
            .iter()
            .zip(&self.counts)
            .map(|(&x, &c)| T::from_u64(c).unwrap() * f.log_density(x))
            .sum()
    }

    /// Cells `(x_(j-1), x_(j)]` with their counts, plus an empty trailing
    /// cell `(x_(r), 1]` when `x_(r) < 1`. An observation at 0 is counted in
    /// the first cell, which is closed at 0.
    pub(crate) fn likelihood_cells(&self) -> (Vec<T>, Vec<u64>) {
        let mut breakpoints = vec![T::zero()];
        let mut counts = Vec::with_capacity(self.values.len() + 1);
        let mut carry = 0;
        for (&v, &c) in self.values.iter().zip(&self.counts) {
            if v <= T::zero() {
                carry += c;
            } else {
                breakpoints.push(v);
                counts.push(c + carry);
                carry = 0;
            }
        }
        if *breakpoints.last().unwrap() < T::one() {
            breakpoints.push(T::one());
            counts.push(carry);
        }
        (breakpoints, counts)
    }
}

/// A run of pooled cells `[start, end)` with its pooled slope.
#[derive(Debug, Clone, Copy)]
struct Block<T> {
    start: usize,
    end: usize,
    width: T,
    mass: T,
}

impl<T: Scalar> Block<T> {
    fn slope(&self) -> T {
        self.mass / self.width
    }
}

/// Antitonic pool-adjacent-violators on `mass_j / width_j` with weights
/// `width_j`. Pools merge left to right and re-check backwards.
fn antitonic_pava<T: Scalar>(widths: &[T], masses: &[T]) -> Vec<Block<T>> {
    let mut blocks: Vec<Block<T>> = Vec::with_capacity(widths.len());
    for (j, (&w, &m)) in widths.iter().zip(masses).enumerate() {
        blocks.push(Block {
            start: j,
            end: j + 1,
            width: w,
            mass: m,
        });
        while blocks.len() > 1 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.slope() >= last.slope() {
                break;
            }
            blocks.pop();
            let merged = blocks.last_mut().unwrap();
            merged.end = last.end;
            merged.width = merged.width + last.width;
            merged.mass = merged.mass + last.mass;
        }
    }
    blocks
}

fn right_closed<T: Scalar>(breakpoints: Vec<T>, heights: Vec<T>) -> Result<MonotoneHistogram<T>> {
    let merged = MonotoneHistogram::with_closure(breakpoints, heights, CellClosure::RightClosed)?;
    Ok(merged.canonical(T::zero()))
}

/// The Grenander estimator: left derivative of the least concave majorant of
/// the empirical CDF, zero beyond the largest observation.
pub fn fit_unconstrained<T: Scalar>(cells: &WeightedCells<T>) -> Result<MonotoneHistogram<T>> {
    if cells.is_empty() {
        return Err(Error::Precondition("cannot fit an empty sample".into()));
    }
    let n = T::from_u64(cells.total()).unwrap();
    let (bps, counts) = cells.likelihood_cells();
    // ECDF vertices, with any mass at 0 folded into the first positive value
    let mut points = vec![(T::zero(), T::zero())];
    let mut cum = 0u64;
    for (j, &c) in counts.iter().enumerate() {
        cum += c;
        if c > 0 {
            points.push((bps[j + 1], T::from_u64(cum).unwrap() / n));
        }
    }
    let mut hull: Vec<(T, T)> = Vec::with_capacity(points.len());
    for p in points {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross < T::zero() {
                break;
            }
            hull.pop();
        }
        hull.push(p);
    }
    let mut breakpoints: Vec<T> = hull.iter().map(|p| p.0).collect();
    let mut heights: Vec<T> = hull
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    if *breakpoints.last().unwrap() < T::one() {
        breakpoints.push(T::one());
        heights.push(T::zero());
    }
    right_closed(breakpoints, heights)
}

/// Constrained Grenander estimator over `D_{a,b}` with `0 < a ≤ 1 ≤ b < ∞`.
pub fn fit_constrained<T: Scalar>(
    cells: &WeightedCells<T>,
    bounds: &BoundsAB<T>,
) -> Result<MonotoneHistogram<T>> {
    bounds.require_feasible()?;
    bounds.require_strict()?;
    fit_bounded(cells, bounds)
}

/// Maximum-likelihood fit over `D_{a,b}` allowing `a = 0` and `b = ∞`.
///
/// The pooled slopes `ĝ` of the unconstrained problem do not depend on the
/// normalization multiplier, so the fit is `clip(c·ĝ, a, b)` for the unique
/// scale `c` restoring unit mass. The mass is piecewise linear in `c` with
/// kinks at `a/ĝ_j` and `b/ĝ_j`; `c` is found exactly on the bracketing piece.
pub fn fit_bounded<T: Scalar>(
    cells: &WeightedCells<T>,
    bounds: &BoundsAB<T>,
) -> Result<MonotoneHistogram<T>> {
    bounds.require_feasible()?;
    if cells.is_empty() {
        return Err(Error::Precondition("cannot fit an empty sample".into()));
    }
    let (a, b) = (bounds.a(), bounds.b());
    if a == b {
        return Ok(MonotoneHistogram::uniform().with_cells(CellClosure::RightClosed));
    }
    let n = T::from_u64(cells.total()).unwrap();
    let (bps, counts) = cells.likelihood_cells();
    let widths: Vec<T> = bps.windows(2).map(|w| w[1] - w[0]).collect();
    let masses: Vec<T> = counts
        .iter()
        .map(|&c| T::from_u64(c).unwrap() / n)
        .collect();
    let blocks = antitonic_pava(&widths, &masses);
    let slopes: Vec<T> = blocks.iter().map(Block::slope).collect();

    let clip = |v: T| v.max(a).min(b);
    let mass_at = |c: T| -> T {
        blocks
            .iter()
            .zip(&slopes)
            .map(|(blk, &g)| clip(c * g) * blk.width)
            .sum()
    };

    let mut kinks: Vec<T> = slopes
        .iter()
        .filter(|&&g| g > T::zero())
        .flat_map(|&g| [a / g, b / g])
        .filter(|c| c.is_finite())
        .collect();
    kinks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    kinks.dedup();

    let one = T::one();
    let upper = kinks.iter().position(|&c| mass_at(c) >= one);
    let scale = match upper {
        Some(0) => Some(kinks[0]),
        Some(i) => Some(solve_piece(&blocks, &slopes, a, b, kinks[i - 1], kinks[i])),
        None if b.is_infinite() => {
            let hi = kinks.last().copied().unwrap_or(T::zero());
            Some(solve_piece(&blocks, &slopes, a, b, hi, T::infinity()))
        }
        None => None,
    };

    let mut heights = vec![T::zero(); widths.len()];
    match scale {
        Some(c) => {
            for (blk, &g) in blocks.iter().zip(&slopes) {
                heights[blk.start..blk.end].fill(clip(c * g));
            }
        }
        None => {
            // even every occupied cell at b leaves mass for the empty tail
            let last = widths.len() - 1;
            let x_max = bps[last];
            heights[..last].fill(b);
            heights[last] = (one - b * x_max) / (one - x_max);
        }
    }
    right_closed(bps, heights)
}

/// Scale `c` in `(lo, hi)` with unit mass, given the clipping pattern there.
fn solve_piece<T: Scalar>(blocks: &[Block<T>], slopes: &[T], a: T, b: T, lo: T, hi: T) -> T {
    let probe = if hi.is_finite() {
        (lo + hi) / T::lit(2.0)
    } else {
        lo * T::lit(2.0) + T::one()
    };
    let (mut fixed, mut free) = (T::zero(), T::zero());
    for (blk, &g) in blocks.iter().zip(slopes) {
        let v = probe * g;
        if v <= a {
            fixed = fixed + a * blk.width;
        } else if v >= b {
            fixed = fixed + b * blk.width;
        } else {
            free = free + g * blk.width;
        }
    }
    if free > T::zero() {
        ((T::one() - fixed) / free).max(lo).min(hi)
    } else {
        lo
    }
}

/// Exhaustive search for the constrained MLE: heads on a uniform grid of
/// `grid_resolution` levels in `[a, b]`, the last height from normalization.
/// Branch and bound keeps grids of 200 levels tractable for up to six
/// distinct points. Test oracle only.
pub fn brute_force_mle_oracle<T: Scalar>(
    cells: &WeightedCells<T>,
    bounds: &BoundsAB<T>,
    grid_resolution: usize,
) -> Result<MonotoneHistogram<T>> {
    bounds.require_feasible()?;
    bounds.require_strict()?;
    if cells.len() > 6 || !(2..=200).contains(&grid_resolution) {
        return Err(Error::Precondition(format!(
            "oracle handles at most 6 distinct points and 2..=200 levels, got {} and {}",
            cells.len(),
            grid_resolution
        )));
    }
    if cells.is_empty() {
        return Err(Error::Precondition("cannot fit an empty sample".into()));
    }
    let (a, b) = (bounds.a(), bounds.b());
    if a == b {
        return Ok(MonotoneHistogram::uniform().with_cells(CellClosure::RightClosed));
    }
    let (bps, counts) = cells.likelihood_cells();
    let widths: Vec<f64> = bps.windows(2).map(|w| (w[1] - w[0]).as_f64()).collect();
    let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let step = (b - a).as_f64() / (grid_resolution - 1) as f64;
    let levels: Vec<f64> = (0..grid_resolution)
        .map(|i| a.as_f64() + step * i as f64)
        .collect();

    let mut search = OracleSearch {
        widths: &widths,
        counts: &counts,
        levels: &levels,
        a: a.as_f64(),
        b: b.as_f64(),
        tail_width: widths
            .iter()
            .rev()
            .scan(0.0, |s, &w| {
                *s += w;
                Some(*s)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect(),
        tail_count: counts
            .iter()
            .rev()
            .scan(0.0, |s, &c| {
                *s += c;
                Some(*s)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect(),
        current: Vec::with_capacity(widths.len()),
        best: f64::NEG_INFINITY,
        best_heights: None,
    };
    search.descend(0, 0.0, 0.0, levels.len() - 1);
    let heights = search.best_heights.ok_or_else(|| {
        Error::Precondition("no grid candidate is feasible; refine the grid".into())
    })?;
    let heights = heights.into_iter().map(T::lit).collect();
    MonotoneHistogram::with_closure(bps, heights, CellClosure::RightClosed)
}

struct OracleSearch<'a> {
    widths: &'a [f64],
    counts: &'a [f64],
    levels: &'a [f64],
    a: f64,
    b: f64,
    tail_width: Vec<f64>,
    tail_count: Vec<f64>,
    current: Vec<f64>,
    best: f64,
    best_heights: Option<Vec<f64>>,
}

impl OracleSearch<'_> {
    const SLACK: f64 = 1e-12;

    fn loglik(count: f64, height: f64) -> f64 {
        if count == 0.0 {
            0.0
        } else {
            count * height.ln()
        }
    }

    /// Largest log-likelihood the cells from `j` on can still reach with mass
    /// `budget` and heights at most `cap`.
    fn upper_bound(&self, j: usize, budget: f64, cap: f64) -> f64 {
        let n_rem = self.tail_count[j];
        if n_rem == 0.0 {
            return 0.0;
        }
        let capped = n_rem * cap.ln();
        let spread: f64 = (j..self.widths.len())
            .filter(|&i| self.counts[i] > 0.0)
            .map(|i| self.counts[i] * (self.counts[i] * budget / (n_rem * self.widths[i])).ln())
            .sum();
        capped.min(spread)
    }

    fn descend(&mut self, j: usize, used: f64, score: f64, cap: usize) {
        let last = self.widths.len() - 1;
        if j == last {
            let prev = self.current.last().copied().unwrap_or(self.b);
            let theta = (1.0 - used) / self.widths[last];
            if theta < self.a - Self::SLACK || theta > prev.min(self.b) + Self::SLACK {
                return;
            }
            let total = score + Self::loglik(self.counts[last], theta);
            if total > self.best {
                self.best = total;
                let mut hs = self.current.clone();
                hs.push(theta);
                self.best_heights = Some(hs);
            }
            return;
        }
        for idx in (0..=cap).rev() {
            let theta = self.levels[idx];
            let used_next = used + theta * self.widths[j];
            // the remaining cells must be able to take up exactly the rest
            if used_next + self.a * self.tail_width[j + 1] > 1.0 + Self::SLACK {
                continue;
            }
            if used_next + theta * self.tail_width[j + 1] < 1.0 - Self::SLACK {
                break;
            }
            let gained = score + Self::loglik(self.counts[j], theta);
            let bound = self.upper_bound(j + 1, 1.0 - used_next, theta);
            if gained + bound <= self.best {
                continue;
            }
            self.current.push(theta);
            self.descend(j + 1, used_next, gained, idx);
            self.current.pop();
        }
    }
}

/// Merges the bins of `f ∈ D_{a,b}` into at most `k` blocks whose left-end
/// log-heights drop by more than `V/k` from block to block, keeping each
/// block's left-end height and rescaling to unit mass.
pub fn compress<T: Scalar>(
    f: &MonotoneHistogram<T>,
    k: usize,
    bounds: &BoundsAB<T>,
) -> Result<MonotoneHistogram<T>> {
    if k == 0 {
        return Err(Error::Precondition("compression needs k >= 1".into()));
    }
    let v = bounds.log_range()?;
    let report = f.validate(bounds);
    if !report.is_valid() {
        return Err(Error::Precondition(format!(
            "compression needs f in D_(a,b): {report:?}"
        )));
    }
    let threshold = v / T::from_usize(k).unwrap();
    let (bps, hs) = (f.breakpoints(), f.heights());
    let mut breakpoints = vec![T::zero()];
    let mut heights = Vec::new();
    let mut start = 0;
    while start < hs.len() {
        let lead = hs[start];
        let mut end = start + 1;
        // ratio form, so a drop from b to a equals V exactly
        while end < hs.len() && (lead / hs[end]).ln() <= threshold {
            end += 1;
        }
        heights.push(hs[start]);
        breakpoints.push(bps[end]);
        start = end;
    }
    MonotoneHistogram::normalized(breakpoints, heights, f.closure())
}

/// Rounds `f` onto the expert grid after checking every hypothesis of the
/// discretization bound: `r ≤ k`, `t_{r-1} ≤ 1 − n^{-γ}`, a final log-drop of
/// at least `V/k`, `V/k < 1`, `VΔ_b < 1` and
/// `aV/k ≥ bΔ_bV + b(Δ_bV + 2kΔ_b)n^γ`.
pub fn discretize_to_net<T: Scalar>(
    f: &MonotoneHistogram<T>,
    params: &ExpertGridParams<T>,
    gamma: T,
) -> Result<MonotoneHistogram<T>> {
    let k = params.k();
    let r = f.num_cells();
    let v = params.log_range();
    let kk = T::from_usize(k).unwrap();
    let n = T::from_u64(params.n()).unwrap();
    let step = params.grid_step();
    let (a, b) = (params.bounds().a(), params.bounds().b());
    let fail = |what: String| Err(Error::Precondition(what));

    if r > k {
        return fail(format!("f has {r} bins but k = {k}"));
    }
    if !(v / kk < T::one()) {
        return fail(format!("V/k < 1 fails: V/k = {}", v / kk));
    }
    if !(v * step < T::one()) {
        return fail(format!("V*Delta_b < 1 fails: V*Delta_b = {}", v * step));
    }
    let lhs = a * v / kk;
    let rhs = b * step * v + b * (step * v + T::lit(2.0) * kk * step) * n.powf(gamma);
    if !(lhs >= rhs) {
        return fail(format!(
            "a*V/k >= b*Delta_b*V + b*(Delta_b*V + 2k*Delta_b)*n^gamma fails: {lhs} < {rhs}"
        ));
    }
    if r >= 2 {
        let t_last = f.breakpoints()[r - 1];
        let edge = T::one() - n.powf(-gamma);
        if !(t_last <= edge) {
            return fail(format!(
                "t_(r-1) <= 1 - n^(-gamma) fails: {t_last} > {edge}"
            ));
        }
        let drop = f.heights()[r - 2].ln() - f.heights()[r - 1].ln();
        if !(drop >= v / kk) {
            return fail(format!("final log-drop >= V/k fails: {drop} < {}", v / kk));
        }
    }
    round_to_net(f, params)
}

/// The rounding construction alone: interior breakpoints rounded down onto
/// `B_n`, head log-heights rounded down onto `Λ`, final height from
/// normalization. Fails only if the result leaves the expert class.
pub fn round_to_net<T: Scalar>(
    f: &MonotoneHistogram<T>,
    params: &ExpertGridParams<T>,
) -> Result<MonotoneHistogram<T>> {
    let r = f.num_cells();
    if r > params.k() {
        return Err(Error::Precondition(format!(
            "f has {r} bins but k = {}",
            params.k()
        )));
    }
    let bounds = params.bounds();
    let report = f.validate(bounds);
    if !report.is_valid() {
        return Err(Error::Precondition(format!(
            "f must lie in D_(a,b): {report:?}"
        )));
    }
    let mut breakpoints = vec![T::zero()];
    let mut heights = Vec::with_capacity(r);
    for j in 0..r - 1 {
        let t = params.grid_point(params.round_down_to_grid(f.breakpoints()[j + 1]));
        // a relative slack of 1e-12 keeps exp/log round trips on the ladder
        let ell = f.heights()[j].ln();
        let theta = params
            .log_height(params.round_down_to_ladder(ell + T::lit(1e-12) * ell.abs().max(T::one())))
            .exp();
        if t > *breakpoints.last().unwrap() {
            breakpoints.push(t);
            heights.push(theta);
        } else if let Some(h) = heights.last_mut() {
            // the earlier bin collapsed to zero width; the later one takes its place
            *h = theta;
        }
    }
    let t_last = *breakpoints.last().unwrap();
    let head_mass: T = heights
        .iter()
        .zip(breakpoints.windows(2))
        .map(|(&h, w)| h * (w[1] - w[0]))
        .sum();
    let theta_r = (T::one() - head_mass) / (T::one() - t_last);
    if !(theta_r >= bounds.a() && theta_r <= bounds.b()) {
        return Err(Error::Precondition(format!(
            "normalized final height {theta_r} leaves [a, b]"
        )));
    }
    if let Some(&prev) = heights.last() {
        if !(prev >= theta_r) {
            return Err(Error::Precondition(format!(
                "normalized final height {theta_r} exceeds the previous height {prev}"
            )));
        }
    }
    breakpoints.push(T::one());
    heights.push(theta_r);
    MonotoneHistogram::new(breakpoints, heights)
}
