//! Simulation scenarios, seeded path sampling, and replicated comparisons
//! of the online algorithms against the truth and the offline fit.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{BoundsAB, Density, DensityModel, ParametricDensity};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_rows, CurvePoint};
use crate::grenander::{fit_bounded, WeightedCells};
use crate::online::{
    run_learner, Algorithm, AlgorithmConfig, ExpertSource, OnlineLearner, PreparedAlgorithm,
};
use crate::scalar::Scalar;
use crate::seeding::{replication_rng, uniform_variates};

/// Curve id of the true-density benchmark.
pub const TRUTH: &str = "truth";
/// Curve id of the hindsight constrained fit.
pub const OFFLINE: &str = "offline";

/// Data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum ScenarioModel<T> {
    /// Iid draws from one density.
    Iid { density: DensityModel<T> },
    /// Draws from `pre` for `t ≤ tau` and from `post` afterwards.
    ChangePoint {
        pre: DensityModel<T>,
        post: DensityModel<T>,
        tau: usize,
    },
}

/// Named scenarios from the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Uniform,
    /// `q(u) = 5/4 − u/2`.
    Linear,
    /// `q(u) = 3(1 − u)²`.
    Quadratic,
    /// Four equal bins with heights `5/4, 13/12, 11/12, 3/4`.
    Piecewise,
    /// Linear `(0.5, 1.5)` switching to linear `(0.75, 1.25)` after step 200.
    ChangePoint,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Uniform,
        Preset::Linear,
        Preset::Quadratic,
        Preset::Piecewise,
        Preset::ChangePoint,
    ];

    pub fn model<T: Scalar>(self) -> ScenarioModel<T> {
        let linear = |d0: f64, d1: f64| -> DensityModel<T> {
            ParametricDensity::linear(T::lit(d0), T::lit(d1))
                .expect("preset is valid")
                .into()
        };
        match self {
            Preset::Uniform => ScenarioModel::Iid {
                density: DensityModel::uniform(),
            },
            Preset::Linear => ScenarioModel::Iid {
                density: linear(0.75, 1.25),
            },
            Preset::Quadratic => ScenarioModel::Iid {
                density: ParametricDensity::Quadratic.into(),
            },
            Preset::Piecewise => ScenarioModel::Iid {
                density: ParametricDensity::piecewise_constant(
                    [15.0, 13.0, 11.0, 9.0]
                        .iter()
                        .map(|h| T::lit(h / 12.0))
                        .collect(),
                )
                .expect("preset is valid")
                .into(),
            },
            Preset::ChangePoint => ScenarioModel::ChangePoint {
                pre: linear(0.5, 1.5),
                post: linear(0.75, 1.25),
                tau: 200,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Uniform => "uniform",
            Preset::Linear => "linear",
            Preset::Quadratic => "quadratic",
            Preset::Piecewise => "piecewise",
            Preset::ChangePoint => "change_point",
        }
    }
}

/// Either a preset name or a full model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum ModelSpec<T> {
    Preset(Preset),
    Custom(ScenarioModel<T>),
}

impl<T: Scalar> ModelSpec<T> {
    pub fn resolve(&self) -> ScenarioModel<T> {
        match self {
            ModelSpec::Preset(p) => p.model(),
            ModelSpec::Custom(m) => m.clone(),
        }
    }
}

impl<T: Scalar> ScenarioModel<T> {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ScenarioModel::Iid { density } => density.check(),
            ScenarioModel::ChangePoint { pre, post, tau } => {
                pre.check()?;
                post.check()?;
                if *tau >= n {
                    return Err(Error::Config(format!(
                        "change point tau = {tau} must be below n = {n}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Density generating observation `t` (1-based).
    pub fn density_at(&self, t: usize) -> &DensityModel<T> {
        match self {
            ScenarioModel::Iid { density } => density,
            ScenarioModel::ChangePoint { pre, post, tau } => {
                if t <= *tau {
                    pre
                } else {
                    post
                }
            }
        }
    }

    /// The single generating density, if the model is iid.
    pub fn iid_density(&self) -> Option<&DensityModel<T>> {
        match self {
            ScenarioModel::Iid { density } => Some(density),
            ScenarioModel::ChangePoint { .. } => None,
        }
    }
}

/// `n` draws for replication `replication`, by inversion of the uniform
/// variates of its seeded stream.
pub fn sample_path<T: Scalar>(
    model: &ScenarioModel<T>,
    n: usize,
    seed: u64,
    replication: u64,
) -> Vec<T> {
    let mut rng = replication_rng(seed, replication);
    uniform_variates(&mut rng, n)
        .into_iter()
        .enumerate()
        .map(|(i, u)| model.density_at(i + 1).inverse_cdf(T::lit(u)))
        .collect()
}

fn default_n() -> usize {
    1000
}
fn default_replications() -> usize {
    50
}
fn default_a() -> f64 {
    DEFAULT_SIM_A
}
fn default_b() -> Option<f64> {
    Some(DEFAULT_SIM_B)
}

/// Lower height bound of the default simulation setup.
pub const DEFAULT_SIM_A: f64 = 0.05;
/// Upper height bound of the default simulation setup.
pub const DEFAULT_SIM_B: f64 = 20.0;

/// A replicated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ScenarioConfig<T> {
    /// Label used in outputs; defaults to the preset name or `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub model: ModelSpec<T>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Bounds of the offline benchmark, and of the algorithms when those
    /// are left to their defaults.
    #[serde(default = "default_a_t")]
    pub a: T,
    #[serde(default = "default_b_t")]
    pub b: Option<T>,
    /// Defaults to OG and EA (factory experts) on `[a, b]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<AlgorithmConfig<T>>>,
}

fn default_a_t<T: Scalar>() -> T {
    T::lit(default_a())
}
fn default_b_t<T: Scalar>() -> Option<T> {
    default_b().map(T::lit)
}

impl<T: Scalar> ScenarioConfig<T> {
    pub fn new(preset: Preset, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            id: None,
            model: ModelSpec::Preset(preset),
            n,
            replications,
            seed,
            a: default_a_t(),
            b: default_b_t(),
            algorithms: None,
        }
    }

    pub fn with_bounds(mut self, bounds: BoundsAB<T>) -> Self {
        self.a = bounds.a();
        self.b = bounds.is_finite().then(|| bounds.b());
        self
    }

    pub fn with_algorithms(mut self, algorithms: Vec<AlgorithmConfig<T>>) -> Self {
        self.algorithms = Some(algorithms);
        self
    }

    pub fn bounds(&self) -> Result<BoundsAB<T>> {
        BoundsAB::new(self.a, self.b.unwrap_or_else(T::infinity))
    }

    pub fn scenario_id(&self) -> String {
        match (&self.id, &self.model) {
            (Some(id), _) => id.clone(),
            (None, ModelSpec::Preset(p)) => p.name().to_string(),
            (None, ModelSpec::Custom(_)) => "custom".to_string(),
        }
    }

    /// The configured algorithms, or OG and EA on the scenario bounds.
    pub fn algorithm_configs(&self) -> Result<Vec<AlgorithmConfig<T>>> {
        if let Some(algos) = &self.algorithms {
            return Ok(algos.clone());
        }
        let bounds = self.bounds()?;
        Ok(vec![
            AlgorithmConfig::og(bounds),
            AlgorithmConfig::ea(bounds, ExpertSource::default(), Some(self.n as u64)),
        ])
    }
}

/// Distinct labels `og`, `ea`, with `_2`, `_3`, ... on repeats.
fn algorithm_ids<T>(configs: &[AlgorithmConfig<T>]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    configs
        .iter()
        .map(|c| {
            let base = match c.algo {
                Algorithm::Og => "og",
                Algorithm::Ea => "ea",
            };
            let count = seen.entry(base).or_insert(0);
            *count += 1;
            if *count == 1 {
                base.to_string()
            } else {
                format!("{base}_{count}")
            }
        })
        .collect()
}

/// Cumulative log-likelihood curves `−L(·, t)` of one replication, in the
/// order of [`Experiment::curve_ids`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct ReplicationCurves<T> {
    pub replication: usize,
    pub curves: Vec<Vec<T>>,
}

impl<T: Scalar> ReplicationCurves<T> {
    /// `−L(·, n)` for curve `index`.
    pub fn final_value(&self, index: usize) -> T {
        *self.curves[index].last().expect("curves are non-empty")
    }
}

/// `(scenario, algorithm, replication, t, −L(·, t))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct TrajectoryRecord<T> {
    pub scenario: String,
    pub algorithm: String,
    pub replication: usize,
    pub t: usize,
    pub cumulative_log_likelihood: T,
}

/// Mean final value of one curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct FinalStat<T> {
    pub mean: T,
    pub stderr: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct ExperimentSummary<T> {
    pub scenario: String,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Mean final cumulative log-likelihood per curve.
    pub final_log_likelihood: BTreeMap<String, FinalStat<T>>,
    /// Mean final regret against the offline fit per algorithm.
    pub final_regret: BTreeMap<String, FinalStat<T>>,
    /// Replications where the offline curve ends at or above every other.
    pub offline_dominates: usize,
    /// Share of replications where `ea` ends with smaller regret than `og`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ea_beats_og_fraction: Option<f64>,
}

/// Results of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct Experiment<T> {
    pub scenario: String,
    pub curve_ids: Vec<String>,
    pub algorithm_count: usize,
    pub replications: Vec<ReplicationCurves<T>>,
    pub summary: ExperimentSummary<T>,
}

fn cumulative_log_likelihood<T: Scalar>(stream: &[T], d: &impl Density<T>) -> Vec<T> {
    let mut acc = T::zero();
    stream
        .iter()
        .map(|&x| {
            acc = acc + d.log_density(x);
            acc
        })
        .collect()
}

fn replicate<T: Scalar>(
    model: &ScenarioModel<T>,
    config: &ScenarioConfig<T>,
    bounds: &BoundsAB<T>,
    prepared: &[PreparedAlgorithm<T>],
    replication: usize,
) -> Result<ReplicationCurves<T>> {
    let stream = sample_path(model, config.n, config.seed, replication as u64);
    let mut curves = Vec::with_capacity(prepared.len() + 2);
    for p in prepared {
        let mut learner: OnlineLearner<T> = p.start()?;
        let ledger = run_learner(&mut learner, &stream)?;
        curves.push(ledger.cumulative().iter().map(|&l| -l).collect());
    }
    if let Some(q) = model.iid_density() {
        curves.push(cumulative_log_likelihood(&stream, q));
    }
    let fit = fit_bounded(&WeightedCells::from_sample(&stream)?, bounds)?;
    curves.push(cumulative_log_likelihood(&stream, &fit));
    Ok(ReplicationCurves {
        replication,
        curves,
    })
}

/// Runs every replication in parallel; results are ordered by replication
/// and do not depend on the thread count.
pub fn run_experiment<T: Scalar>(config: &ScenarioConfig<T>) -> Result<Experiment<T>> {
    if config.n == 0 || config.replications == 0 {
        return Err(Error::Config("n and replications must be positive".into()));
    }
    let model = config.model.resolve();
    model.validate(config.n)?;
    let bounds = config.bounds()?;
    bounds.require_feasible()?;
    let algos = config.algorithm_configs()?;
    let prepared = algos
        .iter()
        .map(AlgorithmConfig::prepare)
        .collect::<Result<Vec<_>>>()?;
    let mut curve_ids = algorithm_ids(&algos);
    if model.iid_density().is_some() {
        curve_ids.push(TRUTH.to_string());
    }
    curve_ids.push(OFFLINE.to_string());

    let replications = (0..config.replications)
        .into_par_iter()
        .map(|r| replicate(&model, config, &bounds, &prepared, r))
        .collect::<Result<Vec<_>>>()?;

    let scenario = config.scenario_id();
    let summary = summarize(&scenario, config, &curve_ids, algos.len(), &replications);
    Ok(Experiment {
        scenario,
        curve_ids,
        algorithm_count: algos.len(),
        replications,
        summary,
    })
}

fn final_stat<T: Scalar>(values: Vec<T>) -> FinalStat<T> {
    let p = aggregate_rows(&values.into_iter().map(|v| vec![v]).collect::<Vec<_>>())[0];
    FinalStat {
        mean: p.mean,
        stderr: p.stderr,
    }
}

fn summarize<T: Scalar>(
    scenario: &str,
    config: &ScenarioConfig<T>,
    curve_ids: &[String],
    algorithm_count: usize,
    reps: &[ReplicationCurves<T>],
) -> ExperimentSummary<T> {
    let offline = curve_ids.len() - 1;
    let final_log_likelihood = curve_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (
                id.clone(),
                final_stat(reps.iter().map(|r| r.final_value(i)).collect()),
            )
        })
        .collect();
    let regret = |r: &ReplicationCurves<T>, i: usize| r.final_value(offline) - r.final_value(i);
    let final_regret = curve_ids[..algorithm_count]
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (
                id.clone(),
                final_stat(reps.iter().map(|r| regret(r, i)).collect()),
            )
        })
        .collect();
    let offline_dominates = reps
        .iter()
        .filter(|r| (0..offline).all(|i| r.final_value(offline) >= r.final_value(i)))
        .count();
    let og = curve_ids.iter().position(|c| c == "og");
    let ea = curve_ids.iter().position(|c| c == "ea");
    let ea_beats_og_fraction = og.zip(ea).map(|(og, ea)| {
        let wins = reps
            .iter()
            .filter(|r| regret(r, ea) < regret(r, og))
            .count();
        wins as f64 / reps.len() as f64
    });
    ExperimentSummary {
        scenario: scenario.to_string(),
        n: config.n,
        replications: config.replications,
        seed: config.seed,
        final_log_likelihood,
        final_regret,
        offline_dominates,
        ea_beats_og_fraction,
    }
}

impl<T: Scalar> Experiment<T> {
    /// One record per curve, replication and step.
    pub fn trajectory_records(&self) -> impl Iterator<Item = TrajectoryRecord<T>> + '_ {
        self.replications.iter().flat_map(move |rep| {
            self.curve_ids
                .iter()
                .zip(&rep.curves)
                .flat_map(move |(id, curve)| {
                    curve
                        .iter()
                        .enumerate()
                        .map(move |(i, &v)| TrajectoryRecord {
                            scenario: self.scenario.clone(),
                            algorithm: id.clone(),
                            replication: rep.replication,
                            t: i + 1,
                            cumulative_log_likelihood: v,
                        })
                })
        })
    }

    /// Mean and standard error of every curve across replications.
    pub fn mean_curves(&self) -> Vec<(String, Vec<CurvePoint<T>>)> {
        self.curve_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let rows: Vec<Vec<T>> = self
                    .replications
                    .iter()
                    .map(|r| r.curves[i].clone())
                    .collect();
                (id.clone(), aggregate_rows(&rows))
            })
            .collect()
    }

    /// `scenario,algorithm,replication,t,cumulative_log_likelihood` rows.
    pub fn write_trajectories_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for rec in self.trajectory_records() {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `t` followed by the mean and standard error of each curve.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<()> {
        let means = self.mean_curves();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for (id, _) in &means {
            header.push(format!("{id}_mean"));
            header.push(format!("{id}_stderr"));
        }
        w.write_record(&header)?;
        let len = means.first().map(|(_, c)| c.len()).unwrap_or(0);
        for t in 0..len {
            let mut row = vec![(t + 1).to_string()];
            for (_, c) in &means {
                row.push(c[t].mean.to_string());
                row.push(c[t].stderr.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
