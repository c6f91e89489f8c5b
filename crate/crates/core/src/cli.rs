//! Command-line interface of the `umda-lab` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::engine::{run, TraceOptions, UmdaConfig};
use crate::error::{config_err, Result};
use crate::experiments::config::{ExperimentConfig, ExperimentFile, MuRule, Scenario};
use crate::experiments::output::{config_from_manifest, write_bundle, write_trace_csv};
use crate::experiments::scenarios::run_experiment;
use crate::model::Bitstring;
use crate::objectives::NoiseConfig;
use crate::oracle;

pub const SEED_ENV: &str = "UMDA_LAB_SEED";

#[derive(Debug, Parser)]
#[command(name = "umda-lab", version, about = "UMDA on LeadingOnes: runs, experiments and exact oracle checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single UMDA run.
    Run(RunArgs),
    /// Run an experiment from a JSON config (or replay a manifest).
    Experiment(ExperimentArgs),
    /// Exact oracle checks.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub lambda: usize,
    #[arg(long)]
    pub mu: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise_p: f64,
    /// Evaluation budget [default: 100 n^2].
    #[arg(long)]
    pub max_evals: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write trace.csv.
    #[arg(long)]
    pub trace: bool,
    /// Record every k-th iteration after the first 100000.
    #[arg(long, default_value_t = 10)]
    pub trace_stride: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(required_unless_present = "manifest", conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Replay the configuration recorded in a manifest.json.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overrides the output directory of the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Binomial-chain law of the level counts against full enumeration,
    /// over the margin grid {1/n, 1/2, 1-1/n}^n.
    Chain {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        lambda: usize,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Exact expected maximum of k i.i.d. LeadingOnes values.
    Maxlo {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: u64,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
    },
    /// Mean tail marginal of low-pressure runs (mu = n, gamma0 = 0.5).
    Tailmarginal {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 30)]
        replications: usize,
        #[arg(long, default_value_t = 5000)]
        iterations: u64,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Monte-Carlo noisy fitness mean against the exact expectation.
    NoiseExpectation {
        #[arg(long, default_value = "111")]
        x: String,
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::Oracle(check) => cmd_oracle(&check),
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let mut trace = if args.trace {
        TraceOptions::full()
    } else {
        TraceOptions::off()
    };
    trace.stride = args.trace_stride;
    let mut config = UmdaConfig::new(args.n, args.lambda, args.mu)
        .with_noise(NoiseConfig::new(args.noise_p).map_err(|e| config_err(e.to_string()))?)
        .with_seed(args.seed)
        .with_trace(trace);
    if let Some(max) = args.max_evals {
        config = config.with_max_evals(max);
    }
    config.validate()?;
    let result = run(&config)?;
    if args.trace {
        fs::create_dir_all(&args.out_dir)?;
        write_trace_csv(&args.out_dir.join("trace.csv"), &result.trace)?;
    }
    println!(
        "success={} evals={} iterations={} n={} lambda={} mu={} noise_p={} seed={}",
        result.success, result.evals, result.iterations, args.n, args.lambda, args.mu, args.noise_p, args.seed
    );
    Ok(ExitCode::SUCCESS)
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| config_err(format!("{SEED_ENV}: '{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

pub fn load_experiment(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut config = match (&args.config, &args.manifest) {
        (_, Some(manifest)) => config_from_manifest(&read(manifest)?)?,
        (Some(path), None) => ExperimentFile::from_json(&read(path)?)?.resolve()?,
        (None, None) => return Err(config_err("either a config file or --manifest is required")),
    };
    if let Some(seed) = seed_override()? {
        config.master_seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        config.output_dir = dir.to_string_lossy().into_owned();
    }
    Ok(config)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<ExitCode> {
    let config = load_experiment(args)?;
    let output = run_experiment(&config, args.jobs)?;
    let dir = PathBuf::from(&config.output_dir);
    let files = write_bundle(&output, &dir)?;
    let successes = output.table.rows.iter().filter(|r| r.success).count();
    println!(
        "scenario={} runs={} successes={} censored={} out_dir={} files={}",
        config.scenario.name(),
        output.table.rows.len(),
        successes,
        output.table.censored(),
        dir.display(),
        files.len()
    );
    if let Some(fit) = &output.fit {
        println!("fit a={} b={} r_squared={}", fit.fit.a, fit.fit.b, fit.fit.r_squared);
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct Report<T: Serialize> {
    check: &'static str,
    #[serde(flatten)]
    body: T,
}

fn emit<T: Serialize>(check: &'static str, body: T, pass: bool) -> Result<ExitCode> {
    println!("{}", serde_json::to_string(&Report { check, body })?);
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Debug, Serialize)]
struct MaxLoReport {
    n: usize,
    k: u64,
    q: f64,
    expected_max: f64,
    enumeration: Option<f64>,
    pass: bool,
}

pub fn cmd_oracle(check: &OracleCommand) -> Result<ExitCode> {
    match *check {
        OracleCommand::Chain { n, lambda, tolerance } => {
            let report = oracle::chain_check(n, lambda, tolerance)?;
            let pass = report.pass;
            emit("chain", report, pass)
        }
        OracleCommand::Maxlo { n, k, q } => {
            let expected_max = oracle::exact_expected_max_leading_ones(n, k, q)?;
            let enumeration = if (k as usize).saturating_mul(n) <= oracle::ENUMERATION_MAX_BITS {
                Some(oracle::enumerate_expected_max_leading_ones(n, k as usize, q)?)
            } else {
                None
            };
            let pass = expected_max.is_finite() && enumeration.is_none_or(|e| (e - expected_max).abs() < 1e-12);
            emit(
                "maxlo",
                MaxLoReport {
                    n,
                    k,
                    q,
                    expected_max,
                    enumeration,
                    pass,
                },
                pass,
            )
        }
        OracleCommand::Tailmarginal {
            n,
            replications,
            iterations,
            seed,
            jobs,
        } => {
            let config = ExperimentConfig {
                n_values: vec![n],
                replications,
                iterations_cap: Some(iterations),
                evals_cap: None,
                mu_rule: Some(MuRule::N),
                master_seed: seed,
                ..ExperimentConfig::defaults(Scenario::LowPressure)
            };
            config.validate()?;
            let output = run_experiment(&config, jobs)?;
            let est = output
                .tail_marginals
                .ok_or_else(|| config_err(format!("no positions beyond beta + 2 at n = {n}")))?;
            let pass = (0.45..=0.55).contains(&est.mean);
            emit("tailmarginal", est, pass)
        }
        OracleCommand::NoiseExpectation { ref x, p, samples, seed } => {
            let x: Bitstring = x.parse()?;
            if x.is_empty() {
                return Err(config_err("x: empty bitstring"));
            }
            let report = oracle::noise_expectation_check(&x, NoiseConfig::new(p)?, samples, seed)?;
            let pass = report.pass;
            emit("noise-expectation", report, pass)
        }
    }
}
