//! Finite classes of monotone histograms used as experts: the gridded class
//! `E_{k,n,β}` and data-free factory classes on uniform bin grids.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::densities::{BoundsAB, Density, MonotoneHistogram};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default cap on raw candidates examined by [`enumerate_expert_class`].
pub const ENUMERATION_CAP: u64 = 10_000_000;

const DEDUP_TOL: f64 = 1e-12;

/// Parameters `(n, k, β, a, b)` of the gridded expert class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ExpertGridParams<T> {
    n: u64,
    k: usize,
    beta: T,
    bounds: BoundsAB<T>,
}

impl<T: Scalar> ExpertGridParams<T> {
    /// `n ≥ 1`, `k ≥ 1`, `β ≥ 0` and `0 < a ≤ 1 ≤ b < ∞`.
    pub fn new(n: u64, k: usize, beta: T, bounds: BoundsAB<T>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Precondition(format!(
                "need n >= 1 and k >= 1, got n = {n}, k = {k}"
            )));
        }
        if !(beta >= T::zero()) || beta.is_infinite() {
            return Err(Error::Precondition(format!(
                "beta must be finite and >= 0, got {beta}"
            )));
        }
        bounds.require_strict()?;
        bounds.require_feasible()?;
        Ok(Self { n, k, beta, bounds })
    }

    #[inline]
    pub fn n(&self) -> u64 {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn beta(&self) -> T {
        self.beta
    }

    #[inline]
    pub fn bounds(&self) -> &BoundsAB<T> {
        &self.bounds
    }

    /// `V = log(b/a)`.
    pub fn log_range(&self) -> T {
        self.bounds
            .log_range()
            .expect("bounds checked finite at construction")
    }

    fn resolution(&self) -> f64 {
        (self.n as f64).powf(self.beta.as_f64() + 1.0)
    }

    /// `⌊n^{β+1}⌋`, the largest grid index.
    pub fn grid_count(&self) -> u64 {
        let x = self.resolution();
        let r = x.round();
        if (x - r).abs() <= 1e-9 * x.max(1.0) {
            r as u64
        } else {
            x.floor() as u64
        }
    }

    /// `Δ_b = n^{-(β+1)}`.
    pub fn grid_step(&self) -> T {
        T::one() / T::lit(self.resolution())
    }

    /// `i·Δ_b`.
    pub fn grid_point(&self, i: u64) -> T {
        T::from_u64(i).unwrap() * self.grid_step()
    }

    /// Largest `i ≤ ⌊n^{β+1}⌋` with `i·Δ_b ≤ t`.
    pub fn round_down_to_grid(&self, t: T) -> u64 {
        let count = self.grid_count();
        let mut i = (t / self.grid_step())
            .floor()
            .to_u64()
            .unwrap_or(0)
            .min(count);
        while i > 0 && self.grid_point(i) > t {
            i -= 1;
        }
        while i < count && self.grid_point(i + 1) <= t {
            i += 1;
        }
        i
    }

    /// `log a + V·m·Δ_b`, the `m`-th element of `Λ_{n,a,b}`.
    pub fn log_height(&self, m: u64) -> T {
        self.bounds.a().ln() + self.log_range() * self.grid_point(m)
    }

    /// Largest `m` with `log_height(m) ≤ ell` (0 if none).
    pub fn round_down_to_ladder(&self, ell: T) -> u64 {
        let v = self.log_range();
        if v <= T::zero() {
            return 0;
        }
        let count = self.grid_count();
        let raw = (ell - self.bounds.a().ln()) / (v * self.grid_step());
        let mut m = raw.floor().max(T::zero()).to_u64().unwrap_or(0).min(count);
        while m > 0 && self.log_height(m) > ell {
            m -= 1;
        }
        while m < count && self.log_height(m + 1) <= ell {
            m += 1;
        }
        m
    }

    /// Grid indices usable as interior breakpoints, i.e. with `0 < i·Δ_b < 1`.
    fn interior_indices(&self) -> std::ops::RangeInclusive<u64> {
        let count = self.grid_count();
        let top = if self.grid_point(count) < T::one() {
            count
        } else {
            count - 1
        };
        1..=top
    }

    /// `k = ⌊(n / log n)^{1/2}⌋`, at least 1.
    pub fn theory_k(n: u64) -> usize {
        if n < 3 {
            return 1;
        }
        let n = n as f64;
        ((n / n.ln()).sqrt().floor() as usize).max(1)
    }
}

/// Where an expert class came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum Provenance<T> {
    GridClass {
        params: ExpertGridParams<T>,
    },
    Factory {
        name: String,
        params: FactorySpec<T>,
    },
    Explicit,
}

/// An ordered, duplicate-free set of monotone histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ExpertClass<T> {
    provenance: Provenance<T>,
    experts: Vec<MonotoneHistogram<T>>,
}

impl<T: Scalar> ExpertClass<T> {
    /// Deduplicates `experts` as functions and sorts them canonically.
    pub fn new(experts: Vec<MonotoneHistogram<T>>, provenance: Provenance<T>) -> Result<Self> {
        let experts = dedup_functions(experts);
        if experts.is_empty() {
            return Err(Error::Config("expert class is empty".into()));
        }
        Ok(Self {
            provenance,
            experts,
        })
    }

    pub fn explicit(experts: Vec<MonotoneHistogram<T>>) -> Result<Self> {
        Self::new(experts, Provenance::Explicit)
    }

    #[inline]
    pub fn experts(&self) -> &[MonotoneHistogram<T>] {
        &self.experts
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.experts.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    #[inline]
    pub fn provenance(&self) -> &Provenance<T> {
        &self.provenance
    }

    /// Sorted union of every expert's breakpoints.
    pub fn common_breakpoints(&self) -> Vec<T> {
        let mut all: Vec<T> = self
            .experts
            .iter()
            .flat_map(|e| e.breakpoints().iter().copied())
            .collect();
        all.sort_by(|x, y| x.partial_cmp(y).unwrap());
        all.dedup();
        all
    }
}

fn lexicographic<T: Scalar>(xs: &[T], ys: &[T]) -> std::cmp::Ordering {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| xs.len().cmp(&ys.len()))
}

fn same_function<T: Scalar>(f: &MonotoneHistogram<T>, g: &MonotoneHistogram<T>) -> bool {
    let tol = T::lit(DEDUP_TOL);
    f.num_cells() == g.num_cells()
        && f.breakpoints() == g.breakpoints()
        && f.heights()
            .iter()
            .zip(g.heights())
            .all(|(&x, &y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(T::one()))
}

/// Merges equal adjacent heights, then sorts by `(r, breakpoints, heights)`
/// and drops functional duplicates.
fn dedup_functions<T: Scalar>(experts: Vec<MonotoneHistogram<T>>) -> Vec<MonotoneHistogram<T>> {
    let mut canon: Vec<MonotoneHistogram<T>> = experts
        .iter()
        .map(|e| e.canonical(T::lit(DEDUP_TOL)))
        .collect();
    canon.sort_by(|f, g| {
        f.num_cells()
            .cmp(&g.num_cells())
            .then_with(|| lexicographic(f.breakpoints(), g.breakpoints()))
            .then_with(|| lexicographic(f.heights(), g.heights()))
    });
    let mut out: Vec<MonotoneHistogram<T>> = Vec::with_capacity(canon.len());
    for e in canon {
        if !out
            .iter()
            .rev()
            .take_while(|o| o.breakpoints() == e.breakpoints())
            .any(|o| same_function(o, &e))
        {
            out.push(e);
        }
    }
    out
}

/// `|B_n|^{k-1}·|Λ|^{k-1}` with `|B_n| = |Λ| = ⌊n^{β+1}⌋ + 1`.
fn raw_candidate_count<T: Scalar>(params: &ExpertGridParams<T>) -> BigUint {
    let side = BigUint::from(params.grid_count() + 1);
    side.pow(2 * (params.k() as u32 - 1))
}

/// `(⌊n^{β+1}⌋ + 2)^{2(k-1)}`.
pub fn class_size_bound<T: Scalar>(params: &ExpertGridParams<T>) -> BigUint {
    BigUint::from(params.grid_count() + 2).pow(2 * (params.k() as u32 - 1))
}

/// Every histogram with at most `k` bins, interior breakpoints on `B_n`,
/// non-increasing head log-heights on `Λ_{n,a,b}` and a final height fixed
/// by normalization that lies in `[a, b]` below the previous height.
pub fn enumerate_expert_class<T: Scalar>(params: &ExpertGridParams<T>) -> Result<ExpertClass<T>> {
    enumerate_expert_class_capped(params, ENUMERATION_CAP)
}

pub fn enumerate_expert_class_capped<T: Scalar>(
    params: &ExpertGridParams<T>,
    cap: u64,
) -> Result<ExpertClass<T>> {
    let raw = raw_candidate_count(params);
    if raw > BigUint::from(cap) {
        return Err(Error::SizeExceeded {
            candidates: raw.to_string(),
            cap,
        });
    }
    let mut found = vec![MonotoneHistogram::uniform()];
    let interior: Vec<u64> = params.interior_indices().collect();
    let ladder: Vec<T> = (0..=params.grid_count())
        .map(|m| params.log_height(m).exp())
        .collect();
    let mut walk = GridWalk {
        params,
        interior: &interior,
        ladder: &ladder,
        breakpoints: vec![T::zero()],
        heights: Vec::new(),
        out: &mut found,
    };
    for r in 2..=params.k() {
        walk.extend(r, 0, ladder.len() - 1, T::zero());
    }
    ExpertClass::new(found, Provenance::GridClass { params: *params })
}

struct GridWalk<'a, T> {
    params: &'a ExpertGridParams<T>,
    interior: &'a [u64],
    ladder: &'a [T],
    breakpoints: Vec<T>,
    heights: Vec<T>,
    out: &'a mut Vec<MonotoneHistogram<T>>,
}

impl<T: Scalar> GridWalk<'_, T> {
    /// Chooses the next head bin: breakpoint index from `first` on, ladder
    /// index at most `top`, with `mass` already placed.
    fn extend(&mut self, r: usize, first: usize, top: usize, mass: T) {
        let placed = self.heights.len();
        if placed == r - 1 {
            self.finish(mass);
            return;
        }
        let remaining_breaks = r - 1 - placed;
        if self.interior.len() < first + remaining_breaks {
            return;
        }
        let a = self.params.bounds().a();
        for bi in first..=self.interior.len() - remaining_breaks {
            let t = self.params.grid_point(self.interior[bi]);
            let width = t - *self.breakpoints.last().unwrap();
            for li in 0..=top {
                let theta = self.ladder[li];
                let mass_next = mass + theta * width;
                // the tail beyond t must keep height at least a
                if mass_next + a * (T::one() - t) > T::one() {
                    break;
                }
                self.breakpoints.push(t);
                self.heights.push(theta);
                self.extend(r, bi + 1, li, mass_next);
                self.breakpoints.pop();
                self.heights.pop();
            }
        }
    }

    fn finish(&mut self, mass: T) {
        let t_last = *self.breakpoints.last().unwrap();
        let theta_r = (T::one() - mass) / (T::one() - t_last);
        let bounds = self.params.bounds();
        let prev = *self.heights.last().unwrap();
        if theta_r >= bounds.a() && theta_r <= bounds.b() && prev >= theta_r {
            let mut bps = self.breakpoints.clone();
            bps.push(T::one());
            let mut hs = self.heights.clone();
            hs.push(theta_r);
            if let Ok(h) = MonotoneHistogram::new(bps, hs) {
                self.out.push(h);
            }
        }
    }
}

/// Checks the four defining properties of `E_{k,n,β}`, naming the first
/// that fails.
pub fn validate_expert_membership<T: Scalar>(
    h: &MonotoneHistogram<T>,
    params: &ExpertGridParams<T>,
) -> Result<()> {
    let fail = |what: String| {
        Err(Error::InvalidDensity(format!(
            "not in the expert class: {what}"
        )))
    };
    let r = h.num_cells();
    if r > params.k() {
        return fail(format!("{r} bins exceed k = {}", params.k()));
    }
    let tol = T::lit(1e-12);
    for &t in h.knots().iter() {
        let i = params.round_down_to_grid(t + tol);
        let on_grid = (params.grid_point(i) - t).abs() <= tol;
        if !on_grid || !(t > T::zero() && t < T::one()) {
            return fail(format!("breakpoint {t} is not an interior grid point"));
        }
    }
    let hs = h.heights();
    for (j, &theta) in hs[..r - 1].iter().enumerate() {
        let ell = theta.ln();
        let m = params.round_down_to_ladder(ell + tol);
        if (params.log_height(m) - ell).abs() > tol {
            return fail(format!("log-height of bin {} is off the ladder", j + 1));
        }
        if j > 0 && theta > hs[j - 1] {
            return fail(format!("heights increase at bin {}", j + 1));
        }
    }
    let last = hs[r - 1];
    let bounds = params.bounds();
    if !(last >= bounds.a() && last <= bounds.b()) {
        return fail(format!("final height {last} outside [a, b]"));
    }
    if r >= 2 && !(hs[r - 2] >= last) {
        return fail("final height exceeds the previous height".into());
    }
    if (h.mass() - T::one()).abs() > T::normalization_tol() {
        return fail(format!("mass {} is not 1", h.mass()));
    }
    Ok(())
}

/// Data-free description of a factory class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct FactorySpec<T> {
    /// Numbers of equal-width bins.
    pub bin_counts: Vec<usize>,
    pub bounds: BoundsAB<T>,
    /// Height ladder; geometric with `levels` points on `[a, b]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<T>>,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    DEFAULT_LEVELS
}

/// Default bin counts of the factory class used in simulations.
pub const DEFAULT_BIN_COUNTS: [usize; 4] = [1, 2, 4, 8];
/// Default ladder size of the factory class used in simulations.
pub const DEFAULT_LEVELS: usize = 9;

impl<T: Scalar> FactorySpec<T> {
    pub fn new(bin_counts: Vec<usize>, bounds: BoundsAB<T>, levels: usize) -> Self {
        Self {
            bin_counts,
            bounds,
            ladder: None,
            levels,
        }
    }

    pub fn with_ladder(bin_counts: Vec<usize>, bounds: BoundsAB<T>, ladder: Vec<T>) -> Self {
        let levels = ladder.len();
        Self {
            bin_counts,
            bounds,
            ladder: Some(ladder),
            levels,
        }
    }

    /// Geometric ladder `a·(b/a)^{i/(L-1)}`, or the explicit one.
    pub fn height_ladder(&self) -> Result<Vec<T>> {
        if let Some(l) = &self.ladder {
            return Ok(l.clone());
        }
        self.bounds.require_strict()?;
        let (a, b) = (self.bounds.a(), self.bounds.b());
        Ok(match self.levels {
            0 => Vec::new(),
            1 => vec![T::one().max(a).min(b)],
            l => (0..l)
                .map(|i| {
                    a * (b / a).powf(T::from_usize(i).unwrap() / T::from_usize(l - 1).unwrap())
                })
                .collect(),
        })
    }
}

/// For each bin count `m`, every non-increasing assignment of ladder heights
/// to the uniform `m`-grid, rescaled to unit mass and kept if it stays in
/// `[a, b]`.
pub fn factory_equal_mass_histograms<T: Scalar>(spec: &FactorySpec<T>) -> Result<ExpertClass<T>> {
    spec.bounds.require_feasible()?;
    let mut ladder = spec.height_ladder()?;
    ladder.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ladder.dedup();
    if ladder.iter().any(|&h| !(h > T::zero()) || h.is_infinite()) {
        return Err(Error::Config(
            "ladder heights must be positive and finite".into(),
        ));
    }
    let tol = T::lit(DEDUP_TOL);
    let (a, b) = (spec.bounds.a(), spec.bounds.b());
    let mut experts = Vec::new();
    for &m in &spec.bin_counts {
        if m == 0 {
            return Err(Error::Config("bin counts must be positive".into()));
        }
        let mf = T::from_usize(m).unwrap();
        let breakpoints: Vec<T> = (0..=m).map(|i| T::from_usize(i).unwrap() / mf).collect();
        let mut idx = vec![0usize; m];
        loop {
            let raw: Vec<T> = idx.iter().map(|&i| ladder[i]).collect();
            let mass = raw.iter().copied().sum::<T>() / mf;
            let hs: Vec<T> = raw.iter().map(|&h| h / mass).collect();
            let inside = hs
                .iter()
                .all(|&h| h >= a * (T::one() - tol) && h <= b * (T::one() + tol));
            if inside {
                if let Ok(h) = MonotoneHistogram::new(breakpoints.clone(), hs) {
                    experts.push(h);
                }
            }
            if !next_non_decreasing(&mut idx, ladder.len()) {
                break;
            }
        }
    }
    ExpertClass::new(
        experts,
        Provenance::Factory {
            name: "equal_mass_histograms".into(),
            params: spec.clone(),
        },
    )
}

/// Advances a non-decreasing index tuple in `0..base` (non-increasing
/// heights on a descending ladder); false once exhausted.
fn next_non_decreasing(idx: &mut [usize], base: usize) -> bool {
    let mut pos = idx.len();
    while pos > 0 {
        pos -= 1;
        if idx[pos] + 1 < base {
            let v = idx[pos] + 1;
            for x in &mut idx[pos..] {
                *x = v;
            }
            return true;
        }
    }
    false
}
