//! Scenario orchestration: low- and high-pressure traces, runtime scaling
//! with power-model regression, and the noisy scaling study.

pub mod config;
pub mod fit;
pub mod output;
pub mod scenarios;
pub mod svg;

pub use config::{EvalsCap, ExperimentConfig, ExperimentFile, MuRule, ResolvedSize, Scenario};
pub use fit::{fit_power_model, PowerFit};
pub use output::{write_bundle, Manifest};
pub use scenarios::{
    run_experiment, run_high_pressure, run_low_pressure, run_noisy_scaling, run_runtime_scaling,
    ExperimentOutput, FitOutcome, ReplicationOutcome, RuntimeRow, RuntimeTable,
};
