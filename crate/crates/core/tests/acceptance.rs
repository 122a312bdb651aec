//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use monodense::calibration::{run_sequential_test, CalibratorSpec};
use monodense::densities::quadrature::integrate;
use monodense::densities::{BoundsAB, Density, DensityModel, MonotoneHistogram, ParametricDensity};
use monodense::evaluation::{
    excess_kl_risk_mc, good_set_check, log_log_slope, regret_vs_offline, GoodSetParams,
};
use monodense::experts::{
    class_size_bound, enumerate_expert_class, factory_equal_mass_histograms,
    validate_expert_membership, ExpertClass, ExpertGridParams, FactorySpec,
};
use monodense::grenander::{
    brute_force_mle_oracle, compress, discretize_to_net, fit_constrained, WeightedCells,
};
use monodense::online::{
    run_learner, Algorithm, AlgorithmConfig, EaState, ExpertSource, OnlineDensity,
};
use monodense::seeding::{replication_rng, uniform_variates};
use monodense::sim::{run_experiment, sample_path, Preset, ScenarioConfig, OFFLINE, TRUTH};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn linear(d0: f64, d1: f64) -> DensityModel<f64> {
    ParametricDensity::linear(d0, d1).unwrap().into()
}

fn draw(q: &DensityModel<f64>, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    uniform_variates(rng, n)
        .into_iter()
        .map(|u| q.inverse_cdf(u))
        .collect()
}

fn loss(h: &impl Density<f64>, xs: &[f64]) -> f64 {
    -xs.iter().map(|&x| h.log_density(x)).sum::<f64>()
}

fn constrained_mle_vs_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..100 {
        let r = rng.random_range(1..=5);
        let mut values: Vec<f64> = (0..r).map(|_| rng.random_range(0.001..0.999)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let counts: Vec<u64> = values.iter().map(|_| rng.random_range(1..=4)).collect();
        let a = rng.random_range(0.05..0.95);
        let b = rng.random_range(1.05..6.0);
        let bounds = BoundsAB::new(a, b).unwrap();
        let cells = WeightedCells::new(values, counts).unwrap();
        let fit = fit_constrained(&cells, &bounds).unwrap();
        let oracle = brute_force_mle_oracle(&cells, &bounds, 200).unwrap();
        let slack = 2.0 * (b - a) / 199.0;
        let margin = cells.log_likelihood(&fit) - cells.log_likelihood(&oracle) + slack;
        worst = worst.min(margin);
        if margin < 0.0 {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        failures == 0 && elapsed < Duration::from_secs(10),
        format!(
            "{failures} of 100 below the oracle, smallest margin {worst:.3e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn random_factory_class(rng: &mut ChaCha8Rng) -> ExpertClass<f64> {
    loop {
        let bin_counts: Vec<usize> = [1, 2, 4, 8]
            .into_iter()
            .filter(|_| rng.random_bool(0.6))
            .collect();
        if bin_counts.is_empty() {
            continue;
        }
        let a = rng.random_range(0.1..0.8);
        let b = rng.random_range(1.25..5.0);
        let levels = rng.random_range(2..=5);
        let spec = FactorySpec::new(bin_counts, BoundsAB::new(a, b).unwrap(), levels);
        let Ok(class) = factory_equal_mass_histograms(&spec) else {
            continue;
        };
        let experts: Vec<MonotoneHistogram<f64>> =
            class.experts().iter().take(100).cloned().collect();
        return ExpertClass::explicit(experts).unwrap();
    }
}

fn mixability_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_gap, mut worst_tele) = (f64::NEG_INFINITY, 0.0f64);
    let mut largest = 0;
    for _ in 0..50 {
        let class = Arc::new(random_factory_class(&mut rng));
        largest = largest.max(class.len());
        let d0 = rng.random_range(0.2..1.0);
        let xs = draw(&linear(d0, 2.0 - d0), &mut rng, 200);
        let mut ea = EaState::new(Arc::clone(&class));
        let log_z0 = ea.log_normalizer();
        let mut sum_log_pred = 0.0;
        let mut ledger_total = 0.0;
        for &x in &xs {
            sum_log_pred += ea.predict_density(x).ln();
            ledger_total += ea.update(x).unwrap();
        }
        let best = class
            .experts()
            .iter()
            .map(|g| loss(g, &xs))
            .fold(f64::INFINITY, f64::min);
        let m = class.len() as f64;
        worst_gap = worst_gap.max(ledger_total - best - m.ln());
        let tele = (sum_log_pred - (ea.log_normalizer() - log_z0)).abs();
        worst_tele = worst_tele.max(tele.max((ledger_total + sum_log_pred).abs()));
    }
    Outcome::new(
        worst_gap <= 1e-8 && worst_tele <= 1e-8,
        format!(
            "max L(EA) - min L(g) - log M = {worst_gap:.3e}, telescoping error {worst_tele:.1e}, M up to {largest}"
        ),
    )
}

fn compression_inequalities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let bounds = BoundsAB::new(0.1, 10.0).unwrap();
    let v = bounds.log_range().unwrap();
    let n = 200;
    let models = [
        linear(0.5, 1.5),
        linear(0.1, 1.9),
        ParametricDensity::Quadratic.into(),
        ParametricDensity::piecewise_constant(vec![2.0, 1.0, 0.6, 0.4])
            .unwrap()
            .into(),
    ];
    let mut violations = Vec::new();
    for i in 0..50 {
        let xs = draw(&models[i % models.len()], &mut rng, n);
        let f = fit_constrained(&WeightedCells::from_sample(&xs).unwrap(), &bounds).unwrap();
        for k in [2usize, 5, 10] {
            let h = compress(&f, k, &bounds).unwrap();
            let kf = k as f64;
            let drops_ok = h.heights().windows(2).all(|w| (w[0] / w[1]).ln() >= v / kf);
            let sup = f.sup_log_distance(&h);
            let dl = (loss(&f, &xs) - loss(&h, &xs)).abs();
            if h.num_cells() > k || !drops_ok || sup > 2.0 * v / kf || dl > 2.0 * n as f64 * v / kf
            {
                violations.push(format!("fit {i} k={k}"));
            }
        }
    }
    Outcome::new(
        violations.is_empty(),
        format!("150 compressions, violations: {violations:?}"),
    )
}

fn discretization_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (beta, gamma) = (3.0, 2.0);
    let mut accepted = 0;
    let mut attempts = 0;
    let mut violations = Vec::new();
    let mut worst_ratio = 0.0f64;
    while accepted < 30 && attempts < 5000 {
        attempts += 1;
        let n = rng.random_range(10..=50usize);
        let k = rng.random_range(2..=5usize);
        let a = rng.random_range(0.3..0.8);
        let b = rng.random_range(1.25..3.0);
        let bounds = BoundsAB::new(a, b).unwrap();
        let d0 = rng.random_range(0.4..1.0);
        let xs = draw(&linear(d0, 2.0 - d0), &mut rng, n);
        let good = good_set_check(&xs, n as u64, &GoodSetParams::new(beta, gamma).unwrap());
        if !good.member {
            continue;
        }
        let fit = fit_constrained(&WeightedCells::from_sample(&xs).unwrap(), &bounds).unwrap();
        let f = compress(&fit, k, &bounds).unwrap();
        let params = ExpertGridParams::new(n as u64, k, beta, bounds).unwrap();
        let Ok(g) = discretize_to_net(&f, &params, gamma) else {
            continue;
        };
        accepted += 1;
        let v = params.log_range();
        let bound = n as f64 * params.grid_step() * v + (k as f64 - 1.0) * v;
        let gap = (loss(&f, &xs) - loss(&g, &xs)).abs();
        worst_ratio = worst_ratio.max(gap / bound);
        if validate_expert_membership(&g, &params).is_err() || gap > bound {
            violations.push(format!("n={n} k={k}"));
        }
    }
    Outcome::new(
        accepted == 30 && violations.is_empty(),
        format!(
            "{accepted} feasible instances from {attempts} draws, violations {violations:?}, largest gap/bound {worst_ratio:.3}"
        ),
    )
}

fn expert_class_counting() -> Outcome {
    let mut checked = 0;
    let mut over = Vec::new();
    for n in 1..=4u64 {
        for beta in [0.0, 0.5, 1.0] {
            for k in 1..=3usize {
                for (a, b) in [(0.5, 2.0), (0.25, 1.5)] {
                    let params =
                        ExpertGridParams::new(n, k, beta, BoundsAB::new(a, b).unwrap()).unwrap();
                    let class = enumerate_expert_class(&params).unwrap();
                    checked += 1;
                    if num_bigint::BigUint::from(class.len()) > class_size_bound(&params) {
                        over.push(format!("n={n} beta={beta} k={k}"));
                    }
                }
            }
        }
    }
    let params = ExpertGridParams::new(2, 2, 0.0, BoundsAB::new(0.5, 2.0).unwrap()).unwrap();
    let class = enumerate_expert_class(&params).unwrap();
    let singleton = class.len() == 1 && class.experts()[0] == MonotoneHistogram::uniform();
    Outcome::new(
        over.is_empty() && singleton,
        format!("{checked} parameter sets, above bound: {over:?}, hand example is {{Uniform}}: {singleton}"),
    )
}

fn risk_rate() -> Outcome {
    let start = Instant::now();
    let config = AlgorithmConfig::og(BoundsAB::new(0.25, 2.0).unwrap());
    let curve = excess_kl_risk_mc(&config, &linear(0.5, 1.5), 1000, 50, 606).unwrap();
    let ns = [125.0, 250.0, 500.0, 1000.0];
    let risks: Vec<f64> = ns
        .iter()
        .map(|&n| curve.cumulative[n as usize - 1].mean)
        .collect();
    let slope = log_log_slope(&ns, &risks);
    let elapsed = start.elapsed();
    Outcome::new(
        (0.2..=0.5).contains(&slope) && elapsed < Duration::from_secs(300),
        format!(
            "Risk(n) = {:?}, slope {slope:.3}, {:.1}s",
            risks
                .iter()
                .map(|r| (r * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn regret_scaling() -> Outcome {
    let model = Preset::Linear.model::<f64>();
    let base = ScenarioConfig::<f64>::new(Preset::Linear, 0, 0, 0);
    let bounds = base.bounds().unwrap();
    let mut rates = Vec::new();
    let mut detail = Vec::new();
    for n in [250usize, 500, 1000, 2000] {
        let prepared = AlgorithmConfig::ea(bounds, ExpertSource::default(), Some(n as u64))
            .prepare()
            .unwrap();
        let regrets: Vec<f64> = (0..50u64)
            .into_par_iter()
            .map(|rep| {
                let xs = sample_path(&model, n, 707, rep);
                let mut learner = prepared.start().unwrap();
                let ledger = run_learner(&mut learner, &xs).unwrap();
                regret_vs_offline(&xs, &ledger, &bounds).unwrap().regret
            })
            .collect();
        let mean = regrets.iter().sum::<f64>() / regrets.len() as f64;
        let nf = n as f64;
        rates.push(mean / (nf * nf.ln()).sqrt());
        detail.push(format!("n={n}: {mean:.2}"));
    }
    let c = rates[0];
    let worst = rates[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        worst <= 2.0 * c,
        format!(
            "mean regret {}; C = {c:.4}, largest later ratio {:.4}",
            detail.join(", "),
            worst
        ),
    )
}

fn rejection_frequency(spec: &CalibratorSpec<f64>, seed: u64) -> f64 {
    let prepared = spec.prepare().unwrap();
    let rejections: usize = (0..2000u64)
        .into_par_iter()
        .map(|rep| {
            let ps = uniform_variates(&mut replication_rng(seed, rep), 200);
            run_sequential_test(&prepared, &ps, 0.05)
                .unwrap()
                .rejection_time
                .is_some() as usize
        })
        .sum();
    rejections as f64 / 2000.0
}

fn validity_under_null() -> Outcome {
    let fixed = rejection_frequency(
        &CalibratorSpec::Static {
            density: linear(0.0, 2.0),
        },
        808,
    );
    let online = rejection_frequency(&CalibratorSpec::online_default(Algorithm::Og), 809);
    Outcome::new(
        fixed <= 0.065 && online <= 0.065,
        format!("rejection frequency static {fixed:.4}, online OG {online:.4}"),
    )
}

fn log_optimality() -> Outcome {
    let q = linear(0.5, 1.5);
    let target = integrate(|u| q.density(u) * q.density(u).ln(), 0.0, 1.0, 1e-12);
    let prepared = CalibratorSpec::online_default(Algorithm::Og)
        .prepare()
        .unwrap();
    let n = 5000;
    let rates: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let ps = sample_path(
                &monodense::sim::ScenarioModel::Iid { density: q.clone() },
                n,
                909,
                seed,
            );
            run_sequential_test(&prepared, &ps, 0.05)
                .unwrap()
                .final_log_wealth()
                / n as f64
        })
        .collect();
    let worst = rates.iter().map(|r| (r - target).abs()).fold(0.0, f64::max);
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    Outcome::new(
        worst <= 0.02,
        format!(
            "target {target:.4}, mean rate {mean:.4}, largest deviation over 20 seeds {worst:.4}"
        ),
    )
}

fn qualitative_reproduction() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for preset in [Preset::Linear, Preset::Quadratic, Preset::Piecewise] {
        let exp = run_experiment(&ScenarioConfig::<f64>::new(preset, 1000, 50, 1010)).unwrap();
        let s = &exp.summary;
        let truth = s.final_log_likelihood[TRUTH].mean;
        let dominated = s.offline_dominates == s.replications;
        pass &= dominated;
        let mut rel = Vec::new();
        for id in ["og", "ea"] {
            let m = s.final_log_likelihood[id].mean;
            let r = (m - truth).abs() / truth.abs();
            pass &= r <= 0.05;
            rel.push(format!("{id} {m:.1} ({:.0}%)", 100.0 * r));
        }
        notes.push(format!(
            "{}: offline {:.1} dominates {}/{}, truth {truth:.1}, {}",
            preset.name(),
            s.final_log_likelihood[OFFLINE].mean,
            s.offline_dominates,
            s.replications,
            rel.join(", ")
        ));
    }
    let cp = run_experiment(&ScenarioConfig::<f64>::new(
        Preset::ChangePoint,
        1000,
        50,
        1011,
    ))
    .unwrap();
    let wins = cp.summary.ea_beats_og_fraction.unwrap();
    pass &= wins >= 0.7;
    notes.push(format!("change_point: EA beats OG on {:.0}%", 100.0 * wins));
    Outcome::new(pass, notes.join("; "))
}

fn run_cli(args: &[&str], threads: &str, dir: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_monodense"))
        .args(args)
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("scenario.json"),
        r#"{"model": "change_point", "n": 300, "replications": 6, "seed": 5}"#,
    )
    .unwrap();
    std::fs::write(d.join("og.json"), r#"{"algo": "og", "a": 0.25, "b": 2.0}"#).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ps: Vec<String> = draw(&linear(0.5, 1.5), &mut rng, 300)
        .iter()
        .map(|p| p.to_string())
        .collect();
    std::fs::write(d.join("p.txt"), ps.join("\n")).unwrap();

    let mut runs: Vec<Vec<Vec<u8>>> = Vec::new();
    for (i, threads) in ["1", "4", "1", "4"].iter().enumerate() {
        let out = format!("sim{i}");
        run_cli(
            &["simulate", "--config", "scenario.json", "--out", &out],
            threads,
            d,
        );
        let mut files = vec![
            std::fs::read(d.join(&out).join("trajectories.csv")).unwrap(),
            std::fs::read(d.join(&out).join("plot_data.csv")).unwrap(),
            std::fs::read(d.join(&out).join("summary.json")).unwrap(),
        ];
        for algo in ["og", "ea"] {
            files.push(run_cli(
                &[
                    "calibrate",
                    "--stream",
                    "p.txt",
                    "--algo",
                    algo,
                    "--alpha",
                    "0.05",
                ],
                threads,
                d,
            ));
        }
        files.push(run_cli(
            &[
                "risk",
                "--algo-config",
                "og.json",
                "--model",
                "linear",
                "--n",
                "100",
                "--replications",
                "8",
                "--seed",
                "3",
            ],
            threads,
            d,
        ));
        runs.push(files);
    }
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    let non_empty = runs[0].iter().all(|f| !f.is_empty());
    Outcome::new(
        identical && non_empty,
        format!(
            "{} outputs compared across 4 runs with 1 and 4 threads, identical: {identical}",
            runs[0].len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        (
            "constrained MLE matches brute-force oracle",
            constrained_mle_vs_oracle,
        ),
        (
            "exponential weights mixability and telescoping",
            mixability_exactness,
        ),
        ("compression inequalities", compression_inequalities),
        ("discretization onto the expert grid", discretization_bounds),
        ("expert class size within bound", expert_class_counting),
        ("OG excess KL-risk growth rate", risk_rate),
        ("EA regret scaling", regret_scaling),
        ("calibrator validity under the null", validity_under_null),
        ("OG calibrator log-optimality", log_optimality),
        ("simulation curves", qualitative_reproduction),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} [{:.1}s] {}",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            name,
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
