//! Loss bookkeeping, regret against the offline fit, Monte Carlo excess
//! KL-risk, and the good-set check on observation sequences.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{kl_to_histogram, BoundsAB, Density, DensityModel};
use crate::error::{Error, Result};
use crate::grenander::{fit_constrained, WeightedCells};
use crate::online::{AlgorithmConfig, OnlineDensity, OnlineLearner};
use crate::scalar::Scalar;
use crate::seeding::{replication_rng, uniform_variates};

/// Per-step log-losses with their running sums. `+∞` entries are allowed
/// and absorb every later prefix sum.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct LossLedger<T> {
    losses: Vec<T>,
    cumulative: Vec<T>,
}

impl<T: Scalar> LossLedger<T> {
    pub fn new() -> Self {
        Self {
            losses: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            losses: Vec::with_capacity(n),
            cumulative: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, loss: T) {
        let prev = self.total();
        self.losses.push(loss);
        self.cumulative.push(prev + loss);
    }

    #[inline]
    pub fn losses(&self) -> &[T] {
        &self.losses
    }

    /// `L(·, t)` for `t = 1..n`.
    #[inline]
    pub fn cumulative(&self) -> &[T] {
        &self.cumulative
    }

    /// `L(·, n)`, zero when empty.
    pub fn total(&self) -> T {
        self.cumulative.last().copied().unwrap_or_else(T::zero)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.losses.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// First step (1-based) with infinite loss.
    pub fn first_infinite(&self) -> Option<usize> {
        self.losses
            .iter()
            .position(|l| l.is_infinite())
            .map(|i| i + 1)
    }
}

/// `L(online, n) − L(f̃^MLE_{n,a,b}, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct RegretReport<T> {
    pub regret: T,
    pub online_loss: T,
    pub benchmark_loss: T,
    /// Set when the online loss is infinite.
    pub infinite: bool,
}

/// Regret of an online ledger against the constrained MLE fitted to the
/// whole stream in hindsight.
pub fn regret_vs_offline<T: Scalar>(
    stream: &[T],
    ledger: &LossLedger<T>,
    bounds: &BoundsAB<T>,
) -> Result<RegretReport<T>> {
    if stream.len() != ledger.len() {
        return Err(Error::Precondition(format!(
            "stream has {} points but the ledger {} losses",
            stream.len(),
            ledger.len()
        )));
    }
    let benchmark_loss = offline_loss(stream, bounds)?;
    let online_loss = ledger.total();
    Ok(RegretReport {
        regret: online_loss - benchmark_loss,
        online_loss,
        benchmark_loss,
        infinite: online_loss.is_infinite(),
    })
}

/// `L(f̃^MLE_n, n)` on the stream it was fitted to (zero when empty).
pub fn offline_loss<T: Scalar>(stream: &[T], bounds: &BoundsAB<T>) -> Result<T> {
    if stream.is_empty() {
        return Ok(T::zero());
    }
    let cells = WeightedCells::from_sample(stream)?;
    let fit = fit_constrained(&cells, bounds)?;
    Ok(-cells.log_likelihood(&fit))
}

/// Parameters `(β, γ)` of the good set `S_n(β, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodSetParams {
    pub beta: f64,
    pub gamma: f64,
}

impl GoodSetParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && gamma > 0.0) {
            return Err(Error::Precondition(format!(
                "good set needs beta, gamma > 0, got ({beta}, {gamma})"
            )));
        }
        Ok(Self { beta, gamma })
    }

    /// Whether `γ < β − 1/2`, as the regret bound requires.
    pub fn suits_regret_bound(&self) -> bool {
        self.gamma < self.beta - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodSetReport {
    /// Smallest pairwise gap (`+∞` for fewer than two points).
    pub min_gap: f64,
    pub max_value: f64,
    /// `n^{-β}`.
    pub gap_threshold: f64,
    /// `1 − n^{-γ}`.
    pub edge_threshold: f64,
    pub member: bool,
}

/// Membership of `stream` in `S_n(β, γ)`.
pub fn good_set_check<T: Scalar>(stream: &[T], n: u64, params: &GoodSetParams) -> GoodSetReport {
    if !params.suits_regret_bound() {
        log::warn!(
            "gamma = {} is not below beta - 1/2 = {}",
            params.gamma,
            params.beta - 0.5
        );
    }
    let mut xs: Vec<f64> = stream.iter().map(|x| x.as_f64()).collect();
    xs.sort_by(f64::total_cmp);
    let min_gap = xs
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let max_value = xs.last().copied().unwrap_or(f64::NEG_INFINITY);
    let n = n as f64;
    let gap_threshold = n.powf(-params.beta);
    let edge_threshold = 1.0 - n.powf(-params.gamma);
    GoodSetReport {
        min_gap,
        max_value,
        gap_threshold,
        edge_threshold,
        member: min_gap >= gap_threshold && max_value <= edge_threshold,
    }
}

/// Mean and standard error across replications at one time index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct CurvePoint<T> {
    pub t: usize,
    pub mean: T,
    pub stderr: T,
    pub replications: usize,
}

/// Column-wise mean and standard error of equally long rows, in row order.
pub fn aggregate_rows<T: Scalar>(rows: &[Vec<T>]) -> Vec<CurvePoint<T>> {
    let b = rows.len();
    let len = rows.iter().map(Vec::len).min().unwrap_or(0);
    let bf = T::from_usize(b).unwrap_or_else(T::one);
    (0..len)
        .map(|i| {
            let mean = rows.iter().map(|r| r[i]).sum::<T>() / bf;
            let stderr = if b > 1 && mean.is_finite() {
                let ss: T = rows.iter().map(|r| (r[i] - mean) * (r[i] - mean)).sum();
                (ss / T::from_usize(b - 1).unwrap()).sqrt() / bf.sqrt()
            } else {
                T::zero()
            };
            CurvePoint {
                t: i + 1,
                mean,
                stderr,
                replications: b,
            }
        })
        .collect()
}

/// Writes `t,mean,stderr,replications` rows.
pub fn write_curve_csv<T: Scalar, W: Write>(points: &[CurvePoint<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mean", "stderr", "replications"])?;
    for p in points {
        w.write_record([
            p.t.to_string(),
            p.mean.to_string(),
            p.stderr.to_string(),
            p.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Monte Carlo excess KL-risk of an online algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct RiskCurve<T> {
    /// `E[KL(q‖f̂_t)]` for `t = 1..n`.
    pub per_step: Vec<CurvePoint<T>>,
    /// `Risk(t) = Σ_{s≤t} E[KL(q‖f̂_s)]`.
    pub cumulative: Vec<CurvePoint<T>>,
    /// Number of `(replication, t)` pairs with infinite KL.
    pub infinite_count: usize,
}

impl<T: Scalar> RiskCurve<T> {
    /// `Risk(n)`.
    pub fn final_risk(&self) -> T {
        self.cumulative
            .last()
            .map(|p| p.mean)
            .unwrap_or_else(T::zero)
    }
}

/// `KL(q‖f̂)` for a histogram predictor.
pub fn kl_to_predictor<T: Scalar>(q: &DensityModel<T>, learner: &OnlineLearner<T>) -> T {
    match learner {
        OnlineLearner::Og(s) => kl_to_histogram(q, s.predictor()),
        OnlineLearner::Ea(s) => kl_to_histogram(q, &s.predict()),
    }
}

pub(crate) fn check_inside<T: Scalar>(q: &DensityModel<T>, bounds: &BoundsAB<T>) -> Result<()> {
    q.check()?;
    let slack = T::lit(1e-12);
    let (hi, lo) = (q.density(T::zero()), q.density(T::one()));
    if hi > bounds.b() * (T::one() + slack) || lo < bounds.a() * (T::one() - slack) {
        return Err(Error::Precondition(format!(
            "true density ranges over [{lo}, {hi}], outside [{}, {}]",
            bounds.a(),
            bounds.b()
        )));
    }
    Ok(())
}

/// Averages `KL(q‖f̂_t)` over `replications` independent streams drawn from
/// `q`, each seeded from `(seed, replication)`.
pub fn excess_kl_risk_mc<T: Scalar>(
    config: &AlgorithmConfig<T>,
    q: &DensityModel<T>,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<RiskCurve<T>> {
    let prepared = config.prepare()?;
    check_inside(q, &config.bounds()?)?;
    let rows: Vec<Vec<T>> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<T>> {
            let mut rng = replication_rng(seed, rep as u64);
            let stream: Vec<T> = uniform_variates(&mut rng, n)
                .into_iter()
                .map(|u| q.inverse_cdf(T::lit(u)))
                .collect();
            let mut learner = prepared.start()?;
            let mut kls = Vec::with_capacity(n);
            for &x in &stream {
                kls.push(kl_to_predictor(q, &learner));
                learner.update(x)?;
            }
            Ok(kls)
        })
        .collect::<Result<_>>()?;
    let infinite_count = rows.iter().flatten().filter(|v| v.is_infinite()).count();
    let cumulative_rows: Vec<Vec<T>> = rows
        .iter()
        .map(|r| {
            let mut acc = T::zero();
            r.iter()
                .map(|&v| {
                    acc = acc + v;
                    acc
                })
                .collect()
        })
        .collect();
    Ok(RiskCurve {
        per_step: aggregate_rows(&rows),
        cumulative: aggregate_rows(&cumulative_rows),
        infinite_count,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
