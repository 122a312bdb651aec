//! Online predictors over `[0, 1]`: the online Grenander refit (OG) and
//! exponentially weighted aggregation over a finite expert class (EA).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::densities::{BoundsAB, CellClosure, Density, MonotoneHistogram};
use crate::error::{check_unit, Error, Result};
use crate::evaluation::LossLedger;
use crate::experts::{
    enumerate_expert_class, factory_equal_mass_histograms, ExpertClass, ExpertGridParams,
    FactorySpec, DEFAULT_BIN_COUNTS, DEFAULT_LEVELS,
};
use crate::grenander::{fit_bounded, WeightedCells};
use crate::scalar::{log_sum_exp, Scalar};

/// Negative log-density, `+∞` where the density vanishes.
#[inline]
pub fn log_loss<T: Scalar>(density: T) -> T {
    if density > T::zero() {
        -density.ln()
    } else {
        T::infinity()
    }
}

/// Predict-then-update protocol shared by every online density estimator.
pub trait OnlineDensity<T: Scalar> {
    /// Current predictor evaluated at `u`; depends only on past updates.
    fn predict_density(&self, u: T) -> T;

    /// Current predictor as an explicit histogram.
    fn predict(&self) -> MonotoneHistogram<T>;

    /// Feeds `x` and returns the loss `−log f̂_t(x)` of the predictor that was
    /// in force before the update.
    fn update(&mut self, x: T) -> Result<T>;

    /// Number of updates so far.
    fn steps(&self) -> u64;
}

/// Online Grenander: the constrained MLE of all past observations, refitted
/// from scratch after each update.
#[derive(Debug, Clone)]
pub struct OgState<T> {
    bounds: BoundsAB<T>,
    cells: WeightedCells<T>,
    predictor: MonotoneHistogram<T>,
}

impl<T: Scalar> OgState<T> {
    /// Bounds may use `a = 0` or `b = ∞`; they must admit the uniform density.
    pub fn new(bounds: BoundsAB<T>) -> Result<Self> {
        bounds.require_feasible()?;
        Ok(Self {
            bounds,
            cells: WeightedCells::empty(),
            predictor: MonotoneHistogram::uniform(),
        })
    }

    #[inline]
    pub fn bounds(&self) -> &BoundsAB<T> {
        &self.bounds
    }

    #[inline]
    pub fn cells(&self) -> &WeightedCells<T> {
        &self.cells
    }

    #[inline]
    pub fn predictor(&self) -> &MonotoneHistogram<T> {
        &self.predictor
    }
}

impl<T: Scalar> OnlineDensity<T> for OgState<T> {
    fn predict_density(&self, u: T) -> T {
        self.predictor.density(u)
    }

    fn predict(&self) -> MonotoneHistogram<T> {
        self.predictor.clone()
    }

    fn update(&mut self, x: T) -> Result<T> {
        check_unit(x.as_f64())?;
        let loss = log_loss(self.predictor.density(x));
        self.cells.push(x)?;
        self.predictor = fit_bounded(&self.cells, &self.bounds)?;
        Ok(loss)
    }

    fn steps(&self) -> u64 {
        self.cells.total()
    }
}

/// Exponential weights over a fixed expert class, kept in log-space.
#[derive(Debug, Clone)]
pub struct EaState<T> {
    experts: Arc<ExpertClass<T>>,
    log_weights: Vec<T>,
    log_norm: T,
    refinement: Arc<Vec<T>>,
    /// Expert heights on each refinement cell, cell-major.
    cell_heights: Arc<Vec<Vec<T>>>,
    /// Logs of `cell_heights`, present when every expert is left-closed so
    /// that a point's refinement cell fixes its cell in each expert.
    cell_log_heights: Option<Arc<Vec<Vec<T>>>>,
    steps: u64,
    horizon: Option<u64>,
}

impl<T: Scalar> EaState<T> {
    /// Uniform prior over `experts`.
    pub fn new(experts: Arc<ExpertClass<T>>) -> Self {
        let m = T::from_usize(experts.len()).unwrap();
        let prior = vec![-m.ln(); experts.len()];
        Self::with_log_prior(experts, prior).expect("uniform prior has the right length")
    }

    /// Prior given by unnormalized log-weights.
    pub fn with_log_prior(experts: Arc<ExpertClass<T>>, log_prior: Vec<T>) -> Result<Self> {
        if log_prior.len() != experts.len() {
            return Err(Error::Config(format!(
                "{} prior weights for {} experts",
                log_prior.len(),
                experts.len()
            )));
        }
        let log_norm = log_sum_exp(&log_prior);
        if !log_norm.is_finite() {
            return Err(Error::Config(
                "prior weights must have finite positive mass".into(),
            ));
        }
        let refinement = experts.common_breakpoints();
        let cell_heights = refinement
            .windows(2)
            .map(|w| {
                let mid = (w[0] + w[1]) / T::lit(2.0);
                experts.experts().iter().map(|e| e.density(mid)).collect()
            })
            .collect::<Vec<Vec<T>>>();
        let left_closed = experts
            .experts()
            .iter()
            .all(|e| e.closure() == CellClosure::LeftClosed);
        let cell_log_heights = left_closed.then(|| {
            Arc::new(
                cell_heights
                    .iter()
                    .map(|row| row.iter().map(|h| h.ln()).collect())
                    .collect(),
            )
        });
        Ok(Self {
            experts,
            log_weights: log_prior,
            log_norm,
            refinement: Arc::new(refinement),
            cell_heights: Arc::new(cell_heights),
            cell_log_heights,
            steps: 0,
            horizon: None,
        })
    }

    /// Horizon the class was built for; exceeding it only logs a warning.
    pub fn with_horizon(mut self, horizon: Option<u64>) -> Self {
        self.horizon = horizon;
        self
    }

    #[inline]
    pub fn experts(&self) -> &ExpertClass<T> {
        &self.experts
    }

    /// Unnormalized log-weights (log-prior plus log-likelihoods).
    #[inline]
    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    /// `log Z_t`, the log of the total unnormalized weight.
    #[inline]
    pub fn log_normalizer(&self) -> T {
        self.log_norm
    }

    /// Normalized weights.
    pub fn weights(&self) -> Vec<T> {
        self.log_weights
            .iter()
            .map(|&lw| (lw - self.log_norm).exp())
            .collect()
    }

    /// `log w_e + log g_e(u)` for every expert.
    fn shifted_log_weights(&self, u: T) -> Vec<T> {
        match &self.cell_log_heights {
            Some(table) => {
                let grid = &self.refinement[1..self.refinement.len() - 1];
                let row = &table[grid.partition_point(|&t| t <= u)];
                self.log_weights
                    .iter()
                    .zip(row)
                    .map(|(&lw, &lh)| lw + lh)
                    .collect()
            }
            None => self
                .log_weights
                .iter()
                .zip(self.experts.experts())
                .map(|(&lw, e)| lw + e.log_density(u))
                .collect(),
        }
    }

    fn log_mixture_at(&self, u: T) -> T {
        log_sum_exp(&self.shifted_log_weights(u))
    }
}

impl<T: Scalar> OnlineDensity<T> for EaState<T> {
    fn predict_density(&self, u: T) -> T {
        (self.log_mixture_at(u) - self.log_norm).exp()
    }

    /// The mixture on the common refinement of the expert breakpoints.
    fn predict(&self) -> MonotoneHistogram<T> {
        let weights = self.weights();
        let heights: Vec<T> = self
            .cell_heights
            .iter()
            .map(|row| weights.iter().zip(row).map(|(&wt, &h)| wt * h).sum())
            .collect();
        MonotoneHistogram::normalized(self.refinement.to_vec(), heights, CellClosure::LeftClosed)
            .expect("mixture of densities is a density")
            .canonical(T::zero())
    }

    fn update(&mut self, x: T) -> Result<T> {
        check_unit(x.as_f64())?;
        self.steps += 1;
        if let Some(h) = self.horizon {
            if self.steps == h + 1 {
                log::warn!("expert class was built for horizon {h}; continuing past it");
            }
        }
        let next = self.shifted_log_weights(x);
        let next_norm = log_sum_exp(&next);
        if next_norm == T::neg_infinity() {
            // every expert rules x out; keep the weights so prediction stays defined
            return Ok(T::infinity());
        }
        let loss = self.log_norm - next_norm;
        self.log_weights = next;
        self.log_norm = next_norm;
        Ok(loss)
    }

    fn steps(&self) -> u64 {
        self.steps
    }
}

/// Either online algorithm behind one interface.
#[derive(Debug, Clone)]
pub enum OnlineLearner<T> {
    Og(OgState<T>),
    Ea(EaState<T>),
}

impl<T: Scalar> OnlineDensity<T> for OnlineLearner<T> {
    fn predict_density(&self, u: T) -> T {
        match self {
            OnlineLearner::Og(s) => s.predict_density(u),
            OnlineLearner::Ea(s) => s.predict_density(u),
        }
    }

    fn predict(&self) -> MonotoneHistogram<T> {
        match self {
            OnlineLearner::Og(s) => s.predict(),
            OnlineLearner::Ea(s) => s.predict(),
        }
    }

    fn update(&mut self, x: T) -> Result<T> {
        match self {
            OnlineLearner::Og(s) => s.update(x),
            OnlineLearner::Ea(s) => s.update(x),
        }
    }

    fn steps(&self) -> u64 {
        match self {
            OnlineLearner::Og(s) => s.steps(),
            OnlineLearner::Ea(s) => s.steps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Og,
    Ea,
}

/// Where EA gets its experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum ExpertSource<T> {
    /// Equal-width histograms with ladder heights.
    Factory {
        #[serde(default = "default_bin_counts")]
        bin_counts: Vec<usize>,
        #[serde(default = "default_levels")]
        levels: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ladder: Option<Vec<T>>,
    },
    /// The gridded class; `n` defaults to the horizon and `k` to
    /// `⌊(n/log n)^{1/2}⌋`.
    Grid {
        beta: T,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
    },
    Explicit {
        experts: Vec<MonotoneHistogram<T>>,
    },
}

fn default_bin_counts() -> Vec<usize> {
    DEFAULT_BIN_COUNTS.to_vec()
}

fn default_levels() -> usize {
    DEFAULT_LEVELS
}

impl<T: Scalar> Default for ExpertSource<T> {
    fn default() -> Self {
        ExpertSource::Factory {
            bin_counts: default_bin_counts(),
            levels: DEFAULT_LEVELS,
            ladder: None,
        }
    }
}

impl<T: Scalar> ExpertSource<T> {
    pub fn build(&self, bounds: &BoundsAB<T>, horizon: Option<u64>) -> Result<ExpertClass<T>> {
        match self {
            ExpertSource::Factory {
                bin_counts,
                levels,
                ladder,
            } => {
                let spec = match ladder {
                    Some(l) => FactorySpec::with_ladder(bin_counts.clone(), *bounds, l.clone()),
                    None => FactorySpec::new(bin_counts.clone(), *bounds, *levels),
                };
                factory_equal_mass_histograms(&spec)
            }
            ExpertSource::Grid { beta, k, n } => {
                let n = n
                    .or(horizon)
                    .ok_or_else(|| Error::Config("grid experts need n or a horizon".into()))?;
                let k = k.unwrap_or_else(|| ExpertGridParams::<T>::theory_k(n));
                enumerate_expert_class(&ExpertGridParams::new(n, k, *beta, *bounds)?)
            }
            ExpertSource::Explicit { experts } => ExpertClass::explicit(experts.clone()),
        }
    }
}

/// `{algo, a, b, expert_source, horizon}`; `b` may be `null` for `∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct AlgorithmConfig<T> {
    pub algo: Algorithm,
    pub a: T,
    #[serde(default)]
    pub b: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_source: Option<ExpertSource<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
}

impl<T: Scalar> AlgorithmConfig<T> {
    pub fn og(bounds: BoundsAB<T>) -> Self {
        Self {
            algo: Algorithm::Og,
            a: bounds.a(),
            b: bounds.is_finite().then(|| bounds.b()),
            expert_source: None,
            horizon: None,
        }
    }

    pub fn ea(bounds: BoundsAB<T>, source: ExpertSource<T>, horizon: Option<u64>) -> Self {
        Self {
            algo: Algorithm::Ea,
            a: bounds.a(),
            b: bounds.is_finite().then(|| bounds.b()),
            expert_source: Some(source),
            horizon,
        }
    }

    pub fn bounds(&self) -> Result<BoundsAB<T>> {
        BoundsAB::new(self.a, self.b.unwrap_or_else(T::infinity))
    }

    /// Builds the state-independent parts once so that replications can
    /// share them.
    pub fn prepare(&self) -> Result<PreparedAlgorithm<T>> {
        let bounds = self.bounds()?;
        bounds.require_feasible()?;
        let experts = match self.algo {
            Algorithm::Og => None,
            Algorithm::Ea => {
                if !bounds.is_finite() || bounds.a() <= T::zero() {
                    return Err(Error::Config(
                        "EA needs 0 < a and finite b for its expert class".into(),
                    ));
                }
                let source = self.expert_source.clone().unwrap_or_default();
                Some(Arc::new(source.build(&bounds, self.horizon)?))
            }
        };
        Ok(PreparedAlgorithm {
            bounds,
            experts,
            horizon: self.horizon,
        })
    }
}

/// An algorithm configuration with its expert class materialized.
#[derive(Debug, Clone)]
pub struct PreparedAlgorithm<T> {
    bounds: BoundsAB<T>,
    experts: Option<Arc<ExpertClass<T>>>,
    horizon: Option<u64>,
}

impl<T: Scalar> PreparedAlgorithm<T> {
    /// A fresh learner with no observations.
    pub fn start(&self) -> Result<OnlineLearner<T>> {
        Ok(match &self.experts {
            None => OnlineLearner::Og(OgState::new(self.bounds)?),
            Some(class) => {
                OnlineLearner::Ea(EaState::new(Arc::clone(class)).with_horizon(self.horizon))
            }
        })
    }

    pub fn experts(&self) -> Option<&ExpertClass<T>> {
        self.experts.as_deref()
    }
}

/// Folds predict/update over `stream`, recording every loss.
pub fn run_online<T: Scalar>(
    config: &AlgorithmConfig<T>,
    stream: &[T],
) -> Result<(LossLedger<T>, OnlineLearner<T>)> {
    let mut learner = config.prepare()?.start()?;
    let ledger = run_learner(&mut learner, stream)?;
    Ok((ledger, learner))
}

/// Runs an existing learner over `stream`.
pub fn run_learner<T: Scalar, L: OnlineDensity<T> + ?Sized>(
    learner: &mut L,
    stream: &[T],
) -> Result<LossLedger<T>> {
    let mut ledger = LossLedger::with_capacity(stream.len());
    for &x in stream {
        ledger.push(learner.update(x)?);
    }
    Ok(ledger)
}
