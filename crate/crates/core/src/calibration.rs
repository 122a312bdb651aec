//! Turning p-values into e-values with monotone densities, and the
//! resulting wealth process for anytime-valid testing.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::densities::{BoundsAB, Density, DensityModel};
use crate::error::{check_unit, Error, Result};
use crate::evaluation::check_inside;
use crate::online::{
    Algorithm, AlgorithmConfig, ExpertSource, OnlineDensity, OnlineLearner, PreparedAlgorithm,
};
use crate::scalar::Scalar;

/// Lower height bound used by online calibrators unless configured.
pub const DEFAULT_CALIBRATION_A: f64 = 0.01;
/// Upper height bound used by online calibrators unless configured.
pub const DEFAULT_CALIBRATION_B: f64 = 100.0;

/// How to build a calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum CalibratorSpec<T> {
    /// A fixed decreasing density.
    Static { density: DensityModel<T> },
    /// An online density estimator fed with the p-values seen so far.
    Online { config: AlgorithmConfig<T> },
    /// The alternative density itself, which is log-optimal for iid data.
    Oracle { density: DensityModel<T> },
}

impl<T: Scalar> CalibratorSpec<T> {
    /// An online calibrator on the default bounds `[0.01, 100]`.
    pub fn online_default(algo: Algorithm) -> Self {
        let bounds = BoundsAB::new(T::lit(DEFAULT_CALIBRATION_A), T::lit(DEFAULT_CALIBRATION_B))
            .expect("default bounds are valid");
        let config = match algo {
            Algorithm::Og => AlgorithmConfig::og(bounds),
            Algorithm::Ea => AlgorithmConfig::ea(bounds, ExpertSource::default(), None),
        };
        CalibratorSpec::Online { config }
    }

    pub fn prepare(&self) -> Result<PreparedCalibrator<T>> {
        Ok(match self {
            CalibratorSpec::Static { density } => {
                density.check()?;
                PreparedCalibrator::Static(density.clone())
            }
            CalibratorSpec::Oracle { density } => {
                density.check()?;
                PreparedCalibrator::Oracle(density.clone())
            }
            CalibratorSpec::Online { config } => PreparedCalibrator::Online(config.prepare()?),
        })
    }

    /// Starts a fresh calibrator; for repeated use prefer [`Self::prepare`].
    pub fn build(&self) -> Result<Calibrator<T>> {
        self.prepare()?.start()
    }
}

/// A calibrator spec with any expert class already built.
#[derive(Debug, Clone)]
pub enum PreparedCalibrator<T> {
    Static(DensityModel<T>),
    Online(PreparedAlgorithm<T>),
    Oracle(DensityModel<T>),
}

impl<T: Scalar> PreparedCalibrator<T> {
    pub fn start(&self) -> Result<Calibrator<T>> {
        Ok(match self {
            PreparedCalibrator::Static(d) => Calibrator::Static(d.clone()),
            PreparedCalibrator::Oracle(d) => Calibrator::Oracle(d.clone()),
            PreparedCalibrator::Online(p) => Calibrator::Online(p.start()?),
        })
    }
}

/// A p-to-e calibrator that commits to `h_t` before seeing `p_t`.
#[derive(Debug, Clone)]
pub enum Calibrator<T> {
    Static(DensityModel<T>),
    Online(OnlineLearner<T>),
    Oracle(DensityModel<T>),
}

impl<T: Scalar> Calibrator<T> {
    /// `h_t(p)` for the current state.
    pub fn e_value(&self, p: T) -> T {
        match self {
            Calibrator::Static(d) | Calibrator::Oracle(d) => d.density(p),
            Calibrator::Online(l) => l.predict_density(p),
        }
    }

    /// The current calibrator function `h_t`.
    pub fn snapshot(&self) -> DensityModel<T> {
        match self {
            Calibrator::Static(d) | Calibrator::Oracle(d) => d.clone(),
            Calibrator::Online(l) => DensityModel::Histogram(l.predict()),
        }
    }

    /// Absorbs `p`; fixed calibrators ignore it.
    pub fn observe(&mut self, p: T) -> Result<()> {
        if let Calibrator::Online(l) = self {
            l.update(p)?;
        }
        Ok(())
    }
}

/// Wealth `M_t = Π h_s(p_s)` in log-space, with an absorbing rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct EProcess<T> {
    log_wealth: T,
    steps: u64,
    alpha: T,
    rejected_at: Option<u64>,
}

impl<T: Scalar> EProcess<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::Precondition(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            log_wealth: T::zero(),
            steps: 0,
            alpha,
            rejected_at: None,
        })
    }

    #[inline]
    pub fn log_wealth(&self) -> T {
        self.log_wealth
    }

    #[inline]
    pub fn steps(&self) -> u64 {
        self.steps
    }

    #[inline]
    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// `log(1/α)`.
    pub fn log_threshold(&self) -> T {
        -self.alpha.ln()
    }

    /// Step at which wealth first reached `1/α`.
    #[inline]
    pub fn rejected_at(&self) -> Option<u64> {
        self.rejected_at
    }

    #[inline]
    pub fn is_rejected(&self) -> bool {
        self.rejected_at.is_some()
    }

    /// Multiplies in one e-value.
    pub fn accumulate(&mut self, e: T) {
        self.steps += 1;
        self.log_wealth = self.log_wealth + e.ln();
        if self.rejected_at.is_none() && self.log_wealth >= self.log_threshold() {
            self.rejected_at = Some(self.steps);
        }
    }
}

/// One row of a sequential test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct StepRecord<T> {
    pub t: u64,
    pub p: T,
    pub e: T,
    pub log_wealth: T,
    pub rejected: bool,
}

/// Emits `e = h_t(p)`, folds it into the wealth, then lets the calibrator
/// learn from `p`.
pub fn step<T: Scalar>(
    calibrator: &mut Calibrator<T>,
    process: &mut EProcess<T>,
    p: T,
) -> Result<StepRecord<T>> {
    check_unit(p.as_f64())?;
    let e = calibrator.e_value(p);
    process.accumulate(e);
    calibrator.observe(p)?;
    Ok(StepRecord {
        t: process.steps(),
        p,
        e,
        log_wealth: process.log_wealth(),
        rejected: process.is_rejected(),
    })
}

/// Full wealth trajectory of a test together with its first crossing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct SequentialTestOutcome<T> {
    pub records: Vec<StepRecord<T>>,
    pub rejection_time: Option<u64>,
}

impl<T: Scalar> SequentialTestOutcome<T> {
    pub fn log_wealth(&self) -> Vec<T> {
        self.records.iter().map(|r| r.log_wealth).collect()
    }

    /// `log M_n` (zero for an empty stream).
    pub fn final_log_wealth(&self) -> T {
        self.records
            .last()
            .map(|r| r.log_wealth)
            .unwrap_or_else(T::zero)
    }
}

/// Runs a fresh calibrator over the whole stream at level `alpha`.
pub fn run_sequential_test<T: Scalar>(
    calibrator: &PreparedCalibrator<T>,
    stream: &[T],
    alpha: T,
) -> Result<SequentialTestOutcome<T>> {
    let mut cal = calibrator.start()?;
    let mut process = EProcess::new(alpha)?;
    let records = stream
        .iter()
        .map(|&p| step(&mut cal, &mut process, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(SequentialTestOutcome {
        records,
        rejection_time: process.rejected_at(),
    })
}

/// Column names of a sequential-test CSV.
pub const RECORD_HEADER: [&str; 5] = ["t", "p", "e", "log_M", "decision"];

impl<T: Scalar> StepRecord<T> {
    /// CSV fields in [`RECORD_HEADER`] order; `decision` is `continue` or
    /// `reject`.
    pub fn csv_fields(&self) -> [String; 5] {
        [
            self.t.to_string(),
            self.p.to_string(),
            self.e.to_string(),
            self.log_wealth.to_string(),
            if self.rejected { "reject" } else { "continue" }.to_string(),
        ]
    }
}

/// Writes the header and one row per record.
pub fn write_records_csv<T: Scalar, W: Write>(records: &[StepRecord<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// `(1/t)(log M_t(ĥ) − log M_t(q))` for `t = 1..n`, both processes fed the
/// same stream.
pub fn log_wealth_rate_gap<T: Scalar>(
    calibrator: &CalibratorSpec<T>,
    oracle: &DensityModel<T>,
    stream: &[T],
) -> Result<Vec<T>> {
    if let CalibratorSpec::Online { config } = calibrator {
        check_inside(oracle, &config.bounds()?)?;
    }
    let mut cal = calibrator.build()?;
    let mut best = Calibrator::Oracle(oracle.clone());
    let (mut lm, mut lq) = (T::zero(), T::zero());
    stream
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            check_unit(p.as_f64())?;
            lm = lm + cal.e_value(p).ln();
            lq = lq + best.e_value(p).ln();
            cal.observe(p)?;
            best.observe(p)?;
            Ok((lm - lq) / T::from_usize(i + 1).unwrap())
        })
        .collect()
}
