//! Univariate Marginal Distribution Algorithm (UMDA) on LeadingOnes.
//!
//! The crate bundles the sampling engine, the analysis quantities that are
//! tracked per iteration (level counts, `Z_t`, `Z_t*`, misrank counts), exact
//! brute-force reference computations for small instances, and the experiment
//! harness behind the `umda-lab` binary.

pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod instrumentation;
pub mod model;
pub mod objectives;
pub mod oracle;
pub mod seeding;

pub use engine::{run, RunResult, TraceOptions, UmdaConfig};
pub use error::{Error, Result};
pub use instrumentation::{IterationStats, LevelCounts, ThresholdParams, TraceSummary};
pub use model::{Bitstring, Population, ProbabilityVector, SortedPopulation};
pub use objectives::{leading_ones, NoiseConfig};
