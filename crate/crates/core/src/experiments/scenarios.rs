use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ResolvedSize, Scenario};
use super::fit::{fit_power_model, PowerFit};
use crate::engine::{run, RunResult, TraceOptions, UmdaConfig};
use crate::error::{config_err, Error, Result};
use crate::instrumentation::{summarize_trace, TraceSummary, Window};
use crate::objectives::NoiseConfig;
use crate::oracle::{tail_marginal_frequency_test, TailMarginalEstimate};
use crate::seeding::replication_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub lambda: usize,
    pub mu: usize,
    pub result: RunResult,
    pub summary: Option<TraceSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub lambda: usize,
    pub mu: usize,
    pub evals: u64,
    pub iterations: u64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuntimeTable {
    pub rows: Vec<RuntimeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeMean {
    pub n: usize,
    pub mean_evals: f64,
    pub successes: usize,
    pub censored: usize,
}

impl RuntimeTable {
    /// Rows that hit the budget without finding the optimum.
    pub fn censored(&self) -> usize {
        self.rows.iter().filter(|r| !r.success).count()
    }

    /// Mean evaluations over successful rows, per `n` in first-seen order.
    pub fn means(&self) -> Vec<SizeMean> {
        let mut out: Vec<SizeMean> = Vec::new();
        for row in &self.rows {
            let idx = match out.iter().position(|m| m.n == row.n) {
                Some(i) => i,
                None => {
                    out.push(SizeMean {
                        n: row.n,
                        mean_evals: 0.0,
                        successes: 0,
                        censored: 0,
                    });
                    out.len() - 1
                }
            };
            let m = &mut out[idx];
            if row.success {
                m.successes += 1;
                m.mean_evals += row.evals as f64;
            } else {
                m.censored += 1;
            }
        }
        for m in &mut out {
            m.mean_evals = if m.successes > 0 {
                m.mean_evals / m.successes as f64
            } else {
                f64::NAN
            };
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub fit: PowerFit,
    pub points_used: usize,
    pub censored: usize,
}

/// Power fit of mean evaluations against `n`; censored rows are excluded.
pub fn fit_runtime_table(table: &RuntimeTable) -> Result<FitOutcome> {
    let points: Vec<(f64, f64)> = table
        .means()
        .into_iter()
        .filter(|m| m.successes > 0)
        .map(|m| (m.n as f64, m.mean_evals))
        .collect();
    Ok(FitOutcome {
        fit: fit_power_model(&points)?,
        points_used: points.len(),
        censored: table.censored(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub sizes: Vec<ResolvedSize>,
    /// Ordered by `n` (as listed in the config), then replication.
    pub outcomes: Vec<ReplicationOutcome>,
    pub table: RuntimeTable,
    pub fit: Option<FitOutcome>,
    pub tail_marginals: Option<TailMarginalEstimate>,
    pub warnings: Vec<String>,
}

impl ExperimentOutput {
    pub fn outcomes_for(&self, n: usize) -> impl Iterator<Item = &ReplicationOutcome> {
        self.outcomes.iter().filter(move |o| o.n == n)
    }
}

/// 0-based positions strictly beyond `beta + 2` (1-based), if any.
pub fn tail_positions(size: &ResolvedSize) -> Option<std::ops::Range<usize>> {
    let first_one_based = (size.thresholds.beta + 2.0).floor() as usize + 1;
    (first_one_based <= size.n).then(|| first_one_based - 1..size.n)
}

fn run_config(config: &ExperimentConfig, size: &ResolvedSize, replication: usize) -> Result<UmdaConfig> {
    let seed = replication_seed(config.master_seed, size.n as u64, replication as u64);
    let mut trace = if config.record_traces {
        TraceOptions::full()
    } else {
        TraceOptions::off()
    };
    if config.scenario == Scenario::LowPressure && config.record_traces {
        trace.marginal_positions = tail_positions(size);
    }
    Ok(UmdaConfig::new(size.n, size.lambda, size.mu)
        .with_noise(NoiseConfig::new(config.noise_p)?)
        .with_max_evals(size.max_evals)
        .with_seed(seed)
        .with_trace(trace))
}

fn run_replication(config: &ExperimentConfig, size: &ResolvedSize, replication: usize) -> Result<ReplicationOutcome> {
    let umda = run_config(config, size, replication)?;
    let result = run(&umda)?;
    let summary = if result.trace.is_empty() {
        None
    } else {
        Some(summarize_trace(&result.trace, &size.thresholds, Window::SecondHalf)?)
    };
    Ok(ReplicationOutcome {
        n: size.n,
        replication,
        seed: umda.seed,
        lambda: size.lambda,
        mu: size.mu,
        result,
        summary,
    })
}

/// Runs every `(n, replication)` of the experiment on up to `jobs` threads
/// (0 = one per core). Results do not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    config.validate()?;
    let warnings = config.warnings();
    for w in &warnings {
        warn!("{w}");
    }
    let sizes = config
        .n_values
        .iter()
        .map(|&n| config.size_for(n))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..config.replications).map(move |r| (s, r)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err(format!("jobs: {e}")))?;
    let outcomes = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, r)| run_replication(config, &sizes[s], r))
            .collect::<Result<Vec<_>>>()
    })?;

    let table = RuntimeTable {
        rows: outcomes
            .iter()
            .map(|o| RuntimeRow {
                n: o.n,
                replication: o.replication,
                seed: o.seed,
                lambda: o.lambda,
                mu: o.mu,
                evals: o.result.evals,
                iterations: o.result.iterations,
                success: o.result.success,
            })
            .collect(),
    };

    let fit = match config.scenario {
        Scenario::RuntimeScaling | Scenario::NoisyScaling => match fit_runtime_table(&table) {
            Ok(f) => Some(f),
            Err(Error::InvalidArgument(msg)) => {
                warn!("no power fit: {msg}");
                None
            }
            Err(e) => return Err(e),
        },
        _ => None,
    };

    let tail_marginals = if config.scenario == Scenario::LowPressure {
        tail_estimate(&sizes, &outcomes)?
    } else {
        None
    };

    Ok(ExperimentOutput {
        config: config.clone(),
        sizes,
        outcomes,
        table,
        fit,
        tail_marginals,
        warnings,
    })
}

/// Tail-marginal mean over the second half of the iteration cap, at the
/// first configured `n`.
fn tail_estimate(
    sizes: &[ResolvedSize],
    outcomes: &[ReplicationOutcome],
) -> Result<Option<TailMarginalEstimate>> {
    let Some(size) = sizes.first() else { return Ok(None) };
    let Some(positions) = tail_positions(size) else { return Ok(None) };
    let iterations = size.max_evals / size.lambda as u64;
    let traces: Vec<_> = outcomes
        .iter()
        .filter(|o| o.n == size.n)
        .filter_map(|o| o.result.marginals.clone())
        .collect();
    if traces.is_empty() {
        return Ok(None);
    }
    let window = iterations / 2..iterations;
    match tail_marginal_frequency_test(&traces, positions, window, &size.thresholds) {
        Ok(est) => Ok(Some(est)),
        Err(Error::InvalidArgument(msg)) => {
            warn!("no tail-marginal estimate: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn expect_scenario(config: &ExperimentConfig, scenario: Scenario) -> Result<()> {
    if config.scenario != scenario {
        return Err(config_err(format!(
            "scenario: expected {}, got {}",
            scenario.name(),
            config.scenario.name()
        )));
    }
    Ok(())
}

/// Long epochs under low selective pressure; traces, summaries and the
/// tail-marginal estimate.
pub fn run_low_pressure(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    expect_scenario(config, Scenario::LowPressure)?;
    run_experiment(config, jobs)
}

/// Runs until the optimum under high selective pressure.
pub fn run_high_pressure(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    expect_scenario(config, Scenario::HighPressure)?;
    run_experiment(config, jobs)
}

pub fn run_runtime_scaling(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    expect_scenario(config, Scenario::RuntimeScaling)?;
    run_experiment(config, jobs)
}

pub fn run_noisy_scaling(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    expect_scenario(config, Scenario::NoisyScaling)?;
    run_experiment(config, jobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{EvalsCap, MuRule};

    fn small(scenario: Scenario) -> ExperimentConfig {
        ExperimentConfig {
            n_values: vec![12, 16, 20],
            replications: 3,
            ..ExperimentConfig::defaults(scenario)
        }
    }

    #[test]
    fn table_shape_and_invariants() {
        let out = run_runtime_scaling(&small(Scenario::RuntimeScaling), 1).unwrap();
        assert_eq!(out.table.rows.len(), 3 * 3);
        for row in &out.table.rows {
            assert_eq!(row.evals, row.lambda as u64 * row.iterations);
        }
        let fit = out.fit.unwrap();
        assert_eq!(fit.points_used, 3);
        assert_eq!(fit.censored, 0);
    }

    #[test]
    fn results_do_not_depend_on_jobs() {
        let cfg = small(Scenario::HighPressure);
        let a = run_high_pressure(&cfg, 1).unwrap();
        let b = run_high_pressure(&cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scenario_mismatch() {
        assert!(run_low_pressure(&small(Scenario::HighPressure), 1).is_err());
    }

    #[test]
    fn censored_rows_are_reported() {
        let cfg = ExperimentConfig {
            n_values: vec![40, 50, 60],
            replications: 2,
            evals_cap: Some(EvalsCap::Absolute(500)),
            mu_rule: Some(MuRule::Explicit(5)),
            ..ExperimentConfig::defaults(Scenario::RuntimeScaling)
        };
        let out = run_runtime_scaling(&cfg, 1).unwrap();
        assert_eq!(out.table.censored(), 6);
        assert!(out.fit.is_none());
        assert!(out.table.means().iter().all(|m| m.mean_evals.is_nan()));
    }

    #[test]
    fn tail_positions_at_100() {
        let cfg = ExperimentConfig::defaults(Scenario::LowPressure);
        let size = cfg.size_for(100).unwrap();
        assert_eq!(tail_positions(&size), Some(89..100));
        let high = ExperimentConfig::defaults(Scenario::HighPressure).size_for(100).unwrap();
        assert_eq!(tail_positions(&high), None);
    }
}
