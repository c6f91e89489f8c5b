//! The UMDA loop: sample, evaluate, sort, truncate to the `mu` fittest and
//! rebuild the margin-clamped model.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::instrumentation::IterationStats;
use crate::model::{sample_population, Bitstring, ProbabilityVector, SortedPopulation};
use crate::objectives::{Evaluator, NoiseConfig};
use crate::seeding::rng_from_seed;

/// Which iterations end up in the trace.
///
/// Every iteration below `full_until` is recorded, afterwards only every
/// `stride`-th. The final iteration is always recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub enabled: bool,
    pub full_until: u64,
    pub stride: u64,
    /// 0-based positions whose marginals are snapshotted alongside the trace.
    pub marginal_positions: Option<Range<usize>>,
}

impl TraceOptions {
    pub fn off() -> Self {
        Self {
            enabled: false,
            full_until: 100_000,
            stride: 10,
            marginal_positions: None,
        }
    }

    pub fn full() -> Self {
        Self {
            enabled: true,
            ..Self::off()
        }
    }

    pub fn records(&self, t: u64) -> bool {
        self.enabled && (t < self.full_until || (t - self.full_until).is_multiple_of(self.stride.max(1)))
    }
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self::off()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UmdaConfig {
    pub n: usize,
    pub lambda: usize,
    pub mu: usize,
    pub noise: NoiseConfig,
    pub max_evals: u64,
    pub seed: u64,
    pub trace: TraceOptions,
}

impl UmdaConfig {
    /// Noiseless configuration with the default budget of `100 n^2`
    /// evaluations, seed 0 and tracing off.
    pub fn new(n: usize, lambda: usize, mu: usize) -> Self {
        Self {
            n,
            lambda,
            mu,
            noise: NoiseConfig::NONE,
            max_evals: default_budget(n),
            seed: 0,
            trace: TraceOptions::off(),
        }
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_max_evals(mut self, max_evals: u64) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trace(mut self, trace: TraceOptions) -> Self {
        self.trace = trace;
        self
    }

    pub fn selective_pressure(&self) -> f64 {
        self.mu as f64 / self.lambda as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(config_err(format!("n = {} violates n >= 2", self.n)));
        }
        if self.mu < 1 {
            return Err(config_err("mu = 0 violates 1 <= mu"));
        }
        if self.mu >= self.lambda {
            return Err(config_err(format!(
                "mu = {} and lambda = {} violate mu < lambda",
                self.mu, self.lambda
            )));
        }
        if self.max_evals < self.lambda as u64 {
            return Err(config_err(format!(
                "max_evals = {} violates max_evals >= lambda = {}",
                self.max_evals, self.lambda
            )));
        }
        if let Some(r) = &self.trace.marginal_positions {
            if r.start >= r.end || r.end > self.n {
                return Err(config_err(format!(
                    "marginal positions {r:?} not a non-empty range inside 0..{}",
                    self.n
                )));
            }
        }
        Ok(())
    }
}

pub fn default_budget(n: usize) -> u64 {
    100 * (n as u64) * (n as u64)
}

/// Snapshots of `p_t` restricted to a range of positions; `p_t` is the model
/// that iteration `t` samples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTrace {
    pub positions: Range<usize>,
    pub snapshots: Vec<(u64, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Whether the all-ones string was sampled.
    pub success: bool,
    pub evals: u64,
    pub iterations: u64,
    pub trace: Vec<IterationStats>,
    pub marginals: Option<MarginalTrace>,
    pub final_model: ProbabilityVector,
}

/// Per-position ones counts among the selected individuals.
pub fn ones_counts(selected: &[Bitstring], n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for x in selected {
        for (w_idx, &w) in x.words().iter().enumerate() {
            let mut bits = w;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                counts[w_idx * 64 + j] += 1;
                bits &= bits - 1;
            }
        }
    }
    counts
}

/// Ones counts and the next model built from `mu` selected individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelUpdate {
    pub ones_counts: Vec<u32>,
    pub new_model: ProbabilityVector,
}

pub fn update_model(selected: &[Bitstring], mu: usize, n: usize) -> Result<ModelUpdate> {
    if selected.len() != mu {
        return Err(config_err(format!(
            "update needs exactly mu = {mu} individuals, got {}",
            selected.len()
        )));
    }
    let ones = ones_counts(selected, n);
    let new_model = ProbabilityVector::from_ones_counts(&ones, mu)?;
    Ok(ModelUpdate {
        ones_counts: ones,
        new_model,
    })
}

/// Runs UMDA until the optimum is sampled or the budget is spent.
///
/// Each iteration charges `lambda` evaluations. The optimum check looks at
/// true fitness of every sampled individual before selection, so a sampled
/// all-ones string counts as success even if noise would rank it low.
pub fn run(config: &UmdaConfig) -> Result<RunResult> {
    config.validate()?;
    let UmdaConfig { n, lambda, mu, .. } = *config;
    let mut rng = rng_from_seed(config.seed);
    let mut model = ProbabilityVector::uniform(n)?;
    let mut evaluator = Evaluator::new(config.noise);
    let mut trace = Vec::new();
    let mut marginals = config.trace.marginal_positions.clone().map(|positions| MarginalTrace {
        positions,
        snapshots: Vec::new(),
    });

    let mut t: u64 = 0;
    loop {
        let record = config.trace.records(t);
        if let Some(m) = marginals.as_mut().filter(|_| record) {
            m.snapshots.push((t, model.marginals()[m.positions.clone()].to_vec()));
        }

        let mut pop = sample_population(&model, lambda, &mut rng);
        evaluator.evaluate(&mut pop, &mut rng);
        let evals = evaluator.evals();
        let success = pop.fitness_true().iter().any(|&f| f as usize == n);
        let done = success || evals >= config.max_evals;

        if config.trace.enabled && (record || done) {
            trace.push(IterationStats::from_population(&pop, n, mu, t, evals)?);
        }
        if done {
            debug_assert_eq!(evals, lambda as u64 * (t + 1));
            return Ok(RunResult {
                success,
                evals,
                iterations: t + 1,
                trace,
                marginals,
                final_model: model,
            });
        }

        let sorted = SortedPopulation::sort(pop)?;
        let update = update_model(sorted.select(mu)?, mu, n)?;
        debug_assert!(update.new_model.within_margins());
        model = update.new_model;
        t += 1;
    }
}
