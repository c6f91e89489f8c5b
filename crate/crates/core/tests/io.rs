//! CSV round trips and reproducibility of runs and experiments.

use umda_lab::engine::{run, TraceOptions, UmdaConfig};
use umda_lab::experiments::config::{ExperimentConfig, Scenario};
use umda_lab::experiments::output::{read_runtime_csv, read_trace_csv, write_bundle, write_runtime_csv, write_trace_csv};
use umda_lab::experiments::scenarios::run_experiment;
use umda_lab::NoiseConfig;

#[test]
fn trace_csv_round_trip() {
    let cfg = UmdaConfig::new(30, 60, 12)
        .with_noise(NoiseConfig::new(0.2).unwrap())
        .with_seed(5)
        .with_trace(TraceOptions::full());
    let result = run(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace_csv(&path, &result.trace).unwrap();
    let rows = read_trace_csv(&path).unwrap();
    assert_eq!(rows.len(), result.trace.len());
    for (row, stats) in rows.iter().zip(&result.trace) {
        assert_eq!(row.iteration, stats.t);
        assert_eq!(row.z_mu, stats.z_mu);
        assert_eq!(row.z_star, stats.z_star);
        assert_eq!(row.best_true, stats.best_true);
        assert_eq!(row.evals, stats.evals);
        assert_eq!(row.misranked, stats.misranked);
    }
}

#[test]
fn runtime_csv_round_trip() {
    let cfg = ExperimentConfig {
        n_values: vec![10, 15],
        replications: 3,
        ..ExperimentConfig::defaults(Scenario::RuntimeScaling)
    };
    let out = run_experiment(&cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runtime.csv");
    write_runtime_csv(&path, &out.table).unwrap();
    assert_eq!(read_runtime_csv(&path).unwrap(), out.table);
}

#[test]
fn runs_replay_from_seed() {
    let cfg = UmdaConfig::new(40, 50, 10)
        .with_noise(NoiseConfig::new(0.1).unwrap())
        .with_seed(99)
        .with_trace(TraceOptions::full());
    assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    assert_ne!(run(&cfg).unwrap(), run(&cfg.clone().with_seed(100)).unwrap());
}

#[test]
fn bundles_do_not_depend_on_thread_count() {
    let cfg = ExperimentConfig {
        n_values: vec![20],
        replications: 3,
        iterations_cap: Some(200),
        ..ExperimentConfig::defaults(Scenario::LowPressure)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files_a = write_bundle(&run_experiment(&cfg, 1).unwrap(), a.path()).unwrap();
    let files_b = write_bundle(&run_experiment(&cfg, 3).unwrap(), b.path()).unwrap();
    assert_eq!(files_a.len(), files_b.len());
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap(), "{}", fa.display());
    }
}
