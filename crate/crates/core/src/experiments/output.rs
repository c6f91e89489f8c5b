//! On-disk bundle: CSV tables, fit and summary JSON, the manifest and plots.
//!
//! ```text
//! trace.csv    iteration,z_mu,z_star,best_true,evals,B
//! runtime.csv  n,replication,seed,lambda,mu,evals,iterations,success
//! fit.json     {"a", "b", "r_squared", "points_used", "censored"}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ResolvedSize, Scenario};
use super::scenarios::{ExperimentOutput, FitOutcome, RuntimeRow, RuntimeTable, SizeMean};
use super::svg::{LineChart, Series};
use crate::error::{config_err, Result};
use crate::instrumentation::{high_pressure_bound, low_pressure_bound, IterationStats, TraceSummary};
use crate::oracle::TailMarginalEstimate;

pub const TOOL_NAME: &str = "umda-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reference value quoted for the high-pressure bound at `n = 100`,
/// `delta = 0.1`; kept next to the evaluated bound in manifests.
pub const HIGH_PRESSURE_BOUND_QUOTED: f64 = 0.1821;

pub const SEED_DERIVATION: &str = "seed(n, r) = splitmix64(splitmix64(splitmix64(master_seed) ^ n) ^ r * 0x9E3779B97F4A7C15); \
each run uses ChaCha8Rng::seed_from_u64(seed)";

// ---------------------------------------------------------------------------
// trace.csv
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub z_mu: usize,
    pub z_star: usize,
    pub best_true: u32,
    pub evals: u64,
    #[serde(rename = "B")]
    pub misranked: u32,
}

impl From<&IterationStats> for TraceRow {
    fn from(s: &IterationStats) -> Self {
        Self {
            iteration: s.t,
            z_mu: s.z_mu,
            z_star: s.z_star,
            best_true: s.best_true,
            evals: s.evals,
            misranked: s.misranked,
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut any = false;
    for row in rows {
        w.serialize(row)?;
        any = true;
    }
    if !any {
        w.write_record(header)?;
    }
    w.flush()?;
    Ok(())
}

const TRACE_HEADER: [&str; 6] = ["iteration", "z_mu", "z_star", "best_true", "evals", "B"];
const RUNTIME_HEADER: [&str; 8] = ["n", "replication", "seed", "lambda", "mu", "evals", "iterations", "success"];

pub fn write_trace_csv(path: &Path, trace: &[IterationStats]) -> Result<()> {
    write_rows(path, trace.iter().map(TraceRow::from), &TRACE_HEADER)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(config_err(format!("{}: unexpected trace header", path.display())));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_runtime_csv(path: &Path, table: &RuntimeTable) -> Result<()> {
    write_rows(path, table.rows.iter(), &RUNTIME_HEADER)
}

pub fn read_runtime_csv(path: &Path) -> Result<RuntimeTable> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(RUNTIME_HEADER.iter().copied()) {
        return Err(config_err(format!("{}: unexpected runtime header", path.display())));
    }
    let rows: Vec<RuntimeRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    Ok(RuntimeTable { rows })
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub points_used: usize,
    pub censored: usize,
}

impl From<&FitOutcome> for FitFile {
    fn from(f: &FitOutcome) -> Self {
        Self {
            a: f.fit.a,
            b: f.fit.b,
            r_squared: f.fit.r_squared,
            points_used: f.points_used,
            censored: f.censored,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub seed_derivation: String,
    pub log_base: String,
    pub config: ExperimentConfig,
    pub sizes: Vec<ResolvedSize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub low_pressure_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub high_pressure_bound_evaluated: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub high_pressure_bound_quoted: Option<f64>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub success: bool,
    pub evals: u64,
    pub iterations: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<TraceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub scenario: Scenario,
    pub means: Vec<SizeMean>,
    pub replications: Vec<ReplicationSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tail_marginals: Option<TailMarginalEstimate>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit_residuals: Option<Vec<f64>>,
}

pub fn manifest_for(output: &ExperimentOutput, files: Vec<String>) -> Manifest {
    let cfg = &output.config;
    let first_n = cfg.n_values[0];
    let (low, high_eval, high_quoted) = match cfg.scenario {
        Scenario::LowPressure => (Some(low_pressure_bound(cfg.delta, cfg.epsilon)), None, None),
        Scenario::HighPressure | Scenario::RuntimeScaling => (
            None,
            Some(high_pressure_bound(first_n, cfg.delta)),
            Some(HIGH_PRESSURE_BOUND_QUOTED),
        ),
        Scenario::NoisyScaling => (None, None, None),
    };
    Manifest {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        master_seed: cfg.master_seed,
        seed_derivation: SEED_DERIVATION.to_string(),
        log_base: "natural".to_string(),
        config: cfg.clone(),
        sizes: output.sizes.clone(),
        low_pressure_bound: low,
        high_pressure_bound_evaluated: high_eval,
        high_pressure_bound_quoted: high_quoted,
        warnings: output.warnings.clone(),
        files,
    }
}

/// Config stored in a manifest, for replays.
pub fn config_from_manifest(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let config = value
        .get("config")
        .ok_or_else(|| config_err("manifest: missing `config`"))?;
    let file = super::config::ExperimentFile::from_json(&config.to_string())?;
    file.resolve()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

fn trace_chart(output: &ExperimentOutput) -> Option<LineChart> {
    let first = output.outcomes.first()?;
    if first.result.trace.is_empty() {
        return None;
    }
    let size = output.sizes.iter().find(|s| s.n == first.n)?;
    let z: Vec<(f64, f64)> = first.result.trace.iter().map(|s| (s.t as f64, s.z_mu as f64)).collect();
    let z_star: Vec<(f64, f64)> = first.result.trace.iter().map(|s| (s.t as f64, s.z_star as f64)).collect();
    let mut reference_lines = Vec::new();
    let limit = size.n as f64;
    if let Some(alpha) = size.thresholds.alpha.filter(|a| *a <= limit) {
        reference_lines.push((format!("alpha={alpha:.2}"), alpha));
    }
    if size.thresholds.beta <= limit {
        reference_lines.push((format!("beta={:.2}", size.thresholds.beta), size.thresholds.beta));
    }
    Some(LineChart {
        title: format!(
            "{} n={} lambda={} mu={} (replication 0)",
            output.config.scenario.name(),
            size.n,
            size.lambda,
            size.mu
        ),
        x_label: "iteration".into(),
        y_label: "leading ones".into(),
        series: vec![
            Series {
                name: "Z_t".into(),
                points: z,
                markers: false,
            },
            Series {
                name: "Z*_t".into(),
                points: z_star,
                markers: false,
            },
        ],
        reference_lines,
    })
}

fn runtime_chart(output: &ExperimentOutput) -> Option<LineChart> {
    let fit = output.fit.as_ref()?;
    let means: Vec<(f64, f64)> = output
        .table
        .means()
        .into_iter()
        .filter(|m| m.successes > 0)
        .map(|m| (m.n as f64, m.mean_evals))
        .collect();
    let (lo, hi) = means
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let curve = (0..=50)
        .map(|k| {
            let n = lo + (hi - lo) * k as f64 / 50.0;
            (n, fit.fit.predict(n))
        })
        .collect();
    Some(LineChart {
        title: format!("{}: mean evaluations", output.config.scenario.name()),
        x_label: "n".into(),
        y_label: "evaluations".into(),
        series: vec![
            Series {
                name: "mean evals".into(),
                points: means,
                markers: true,
            },
            Series {
                name: format!("{:.4} * n^{:.4}", fit.fit.a, fit.fit.b),
                points: curve,
                markers: false,
            },
        ],
        reference_lines: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

/// Writes the bundle into `dir` and returns the written paths. The manifest
/// is written last and lists every other file.
pub fn write_bundle(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<String> = Vec::new();

    if output.config.record_traces && output.outcomes.iter().any(|o| !o.result.trace.is_empty()) {
        let traces_dir = dir.join("traces");
        fs::create_dir_all(&traces_dir)?;
        for o in &output.outcomes {
            let name = format!("traces/trace_n{}_r{:03}.csv", o.n, o.replication);
            write_trace_csv(&dir.join(&name), &o.result.trace)?;
            files.push(name);
        }
        if let Some(first) = output.outcomes.first() {
            write_trace_csv(&dir.join("trace.csv"), &first.result.trace)?;
            files.push("trace.csv".into());
        }
    }

    write_runtime_csv(&dir.join("runtime.csv"), &output.table)?;
    files.push("runtime.csv".into());

    if let Some(fit) = &output.fit {
        write_json(&dir.join("fit.json"), &FitFile::from(fit))?;
        files.push("fit.json".into());
    }

    let summary = SummaryFile {
        scenario: output.config.scenario,
        means: output.table.means(),
        replications: output
            .outcomes
            .iter()
            .map(|o| ReplicationSummary {
                n: o.n,
                replication: o.replication,
                seed: o.seed,
                success: o.result.success,
                evals: o.result.evals,
                iterations: o.result.iterations,
                trace: o.summary.clone(),
            })
            .collect(),
        tail_marginals: output.tail_marginals.clone(),
        fit_residuals: output.fit.as_ref().map(|f| f.fit.residuals.clone()),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    files.push("summary.json".into());

    if let Some(chart) = trace_chart(output).or_else(|| runtime_chart(output)) {
        fs::write(dir.join("plot.svg"), chart.render())?;
        files.push("plot.svg".into());
    }

    let manifest = manifest_for(output, files.clone());
    write_json(&dir.join("manifest.json"), &manifest)?;
    files.push("manifest.json".into());
    Ok(files.into_iter().map(|f| dir.join(f)).collect())
}
