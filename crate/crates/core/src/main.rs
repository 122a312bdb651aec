use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use monodense::calibration::{
    step, CalibratorSpec, EProcess, DEFAULT_CALIBRATION_A, DEFAULT_CALIBRATION_B, RECORD_HEADER,
};
use monodense::evaluation::{excess_kl_risk_mc, write_curve_csv};
use monodense::experts::{class_size_bound, enumerate_expert_class, ExpertGridParams};
use monodense::grenander::{fit_bounded, WeightedCells};
use monodense::online::{Algorithm, AlgorithmConfig, ExpertSource};
use monodense::sim::{run_experiment, Preset, ScenarioConfig};
use monodense::Bounds;

/// Exit status of `calibrate --test` when the null is rejected.
const EXIT_REJECTED: u8 = 1;
/// Exit status for any error.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "monodense",
    version,
    about = "Online monotone density estimation and p-to-e calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated simulation and write trajectories, summary and plot data.
    Simulate {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the constrained Grenander estimator and print it as JSON.
    Fit {
        /// Whitespace-separated observations in [0, 1]; `-` for stdin.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        a: f64,
        /// Upper height bound; `inf` for none.
        #[arg(long, default_value_t = f64::INFINITY)]
        b: f64,
    },
    /// Turn a p-value stream into e-values and wealth, one CSV row per p-value.
    Calibrate(CalibrateArgs),
    /// Expert class utilities.
    Experts {
        #[command(subcommand)]
        command: ExpertsCommand,
    },
    /// Monte Carlo excess KL-risk curve of an online algorithm.
    Risk(RiskArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Newline-delimited p-values; `-` for stdin.
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_A)]
    a: f64,
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_B)]
    b: f64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 if the null is rejected, 0 otherwise.
    #[arg(long)]
    test: bool,
}

#[derive(Subcommand)]
enum ExpertsCommand {
    /// Enumerate the gridded expert class and compare its size to the bound.
    Enumerate {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
    },
}

#[derive(Args)]
struct RiskArgs {
    /// Algorithm configuration (JSON `{algo, a, b, expert_source, horizon}`).
    #[arg(long)]
    algo_config: PathBuf,
    /// True density.
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cumulative risk CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Og,
    Ea,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Uniform,
    Linear,
    Quadratic,
    Piecewise,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, out } => simulate(&config, &out)?,
        Command::Fit { data, a, b } => fit(&data, a, b)?,
        Command::Calibrate(args) => return calibrate(&args),
        Command::Experts {
            command: ExpertsCommand::Enumerate { n, k, beta, a, b },
        } => enumerate(n, k, beta, a, b)?,
        Command::Risk(args) => risk(&args)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn open_input(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        None => Box::new(BufWriter::new(io::stdout())),
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
    })
}

fn parse_number(token: &str, line: usize) -> anyhow::Result<f64> {
    token
        .parse()
        .with_context(|| format!("line {line}: not a number: {token:?}"))
}

fn simulate(config: &Path, out: &Path) -> anyhow::Result<()> {
    let text =
        fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
    let cfg: ScenarioConfig<f64> =
        serde_json::from_str(&text).context("invalid scenario config")?;
    let exp = run_experiment(&cfg)?;
    fs::create_dir_all(out)?;
    exp.write_trajectories_csv(BufWriter::new(File::create(out.join("trajectories.csv"))?))?;
    exp.write_plot_csv(BufWriter::new(File::create(out.join("plot_data.csv"))?))?;
    let mut summary = BufWriter::new(File::create(out.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut summary, &exp.summary)?;
    writeln!(summary)?;
    summary.flush()?;
    Ok(())
}

fn fit(data: &Path, a: f64, b: f64) -> anyhow::Result<()> {
    let mut text = String::new();
    open_input(data)?.read_to_string(&mut text)?;
    let xs = text
        .split_whitespace()
        .enumerate()
        .map(|(i, tok)| parse_number(tok, i + 1))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let fit = fit_bounded(&WeightedCells::from_sample(&xs)?, &Bounds::new(a, b)?)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(())
}

fn calibrate(args: &CalibrateArgs) -> anyhow::Result<ExitCode> {
    let bounds = Bounds::new(args.a, args.b)?;
    let config = match args.algo {
        AlgoArg::Og => AlgorithmConfig::og(bounds),
        AlgoArg::Ea => AlgorithmConfig::ea(bounds, ExpertSource::default(), None),
    };
    let mut cal = CalibratorSpec::Online { config }.build()?;
    let mut process = EProcess::new(args.alpha)?;
    let mut out = csv::Writer::from_writer(open_output(args.out.as_deref())?);
    out.write_record(RECORD_HEADER)?;
    for (i, line) in open_input(&args.stream)?.lines().enumerate() {
        let line = line?;
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let record = step(&mut cal, &mut process, parse_number(token, i + 1)?)
            .with_context(|| format!("line {}", i + 1))?;
        out.write_record(record.csv_fields())?;
    }
    out.flush()?;
    if args.test && process.is_rejected() {
        return Ok(ExitCode::from(EXIT_REJECTED));
    }
    Ok(ExitCode::SUCCESS)
}

fn enumerate(n: u64, k: usize, beta: f64, a: f64, b: f64) -> anyhow::Result<()> {
    let params = ExpertGridParams::new(n, k, beta, Bounds::new(a, b)?)?;
    let class = enumerate_expert_class(&params)?;
    let bound = class_size_bound(&params);
    let report = json!({
        "class": class,
        "size": class.len(),
        "bound": bound.to_string(),
        "within_bound": num_bigint::BigUint::from(class.len()) <= bound,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn risk(args: &RiskArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.algo_config)
        .with_context(|| format!("cannot read {}", args.algo_config.display()))?;
    let config: AlgorithmConfig<f64> =
        serde_json::from_str(&text).context("invalid algorithm config")?;
    if config.algo == Algorithm::Ea && config.expert_source.is_none() {
        log::info!("using the default factory experts");
    }
    let preset = match args.model {
        ModelArg::Uniform => Preset::Uniform,
        ModelArg::Linear => Preset::Linear,
        ModelArg::Quadratic => Preset::Quadratic,
        ModelArg::Piecewise => Preset::Piecewise,
    };
    let Some(q) = preset.model::<f64>().iid_density().cloned() else {
        bail!("risk needs an iid model");
    };
    let curve = excess_kl_risk_mc(&config, &q, args.n, args.replications, args.seed)?;
    write_curve_csv(&curve.cumulative, open_output(args.out.as_deref())?)?;
    Ok(())
}
