//! Experiment configuration: the strict JSON file format, scenario defaults
//! and per-`n` resolution of population sizes, budgets and thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::instrumentation::{high_pressure_bound, low_pressure_bound, thresholds, ThresholdParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    LowPressure,
    HighPressure,
    RuntimeScaling,
    NoisyScaling,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::LowPressure => "low_pressure",
            Scenario::HighPressure => "high_pressure",
            Scenario::RuntimeScaling => "runtime_scaling",
            Scenario::NoisyScaling => "noisy_scaling",
        }
    }
}

/// How the parent population size follows from `n`.
///
/// `c_log_n` uses the natural logarithm and rounds up; `sqrt_n` rounds to
/// the nearest integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRule {
    CLogN(f64),
    SqrtN,
    N,
    Explicit(usize),
}

impl MuRule {
    pub fn raw(&self, n: usize) -> f64 {
        match *self {
            MuRule::CLogN(c) => c * (n as f64).ln(),
            MuRule::SqrtN => (n as f64).sqrt(),
            MuRule::N => n as f64,
            MuRule::Explicit(mu) => mu as f64,
        }
    }

    pub fn mu(&self, n: usize) -> usize {
        let raw = self.raw(n);
        let mu = match self {
            MuRule::CLogN(_) => raw.ceil(),
            _ => raw.round(),
        };
        (mu as usize).max(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalsCap {
    Absolute(u64),
    PerNSquared(f64),
}

impl EvalsCap {
    pub fn for_n(&self, n: usize) -> u64 {
        match *self {
            EvalsCap::Absolute(e) => e,
            EvalsCap::PerNSquared(c) => (c * (n * n) as f64).ceil() as u64,
        }
    }
}

/// The experiment file as written by users. Missing fields take the
/// scenario defaults; unknown fields are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub scenario: Option<Scenario>,
    pub n_values: Option<Vec<usize>>,
    pub gamma0: Option<f64>,
    pub mu_rule: Option<MuRule>,
    pub replications: Option<usize>,
    pub iterations_cap: Option<u64>,
    pub evals_cap: Option<EvalsCap>,
    pub noise_p: Option<f64>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<String>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub record_traces: Option<bool>,
}

/// A fully resolved experiment. Serialises with the same field names as
/// [`ExperimentFile`], so a manifest's config can be fed back in verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_values: Vec<usize>,
    /// Target `mu / lambda`; absent for `noisy_scaling`, which sizes its
    /// populations from `n` directly.
    pub gamma0: Option<f64>,
    pub mu_rule: Option<MuRule>,
    pub replications: usize,
    pub iterations_cap: Option<u64>,
    pub evals_cap: Option<EvalsCap>,
    pub noise_p: f64,
    pub master_seed: u64,
    pub output_dir: String,
    pub delta: f64,
    pub epsilon: f64,
    pub record_traces: bool,
}

impl ExperimentFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(format!("config schema at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn resolve(self) -> Result<ExperimentConfig> {
        let scenario = self
            .scenario
            .ok_or_else(|| config_err("scenario: missing field"))?;
        let mut cfg = ExperimentConfig::defaults(scenario);
        if scenario == Scenario::NoisyScaling && (self.gamma0.is_some() || self.mu_rule.is_some()) {
            return Err(config_err(
                "gamma0/mu_rule: noisy_scaling derives lambda = ceil(n / ln n) and mu from delta",
            ));
        }
        if self.iterations_cap.is_some() && self.evals_cap.is_some() {
            return Err(config_err("iterations_cap/evals_cap: give at most one budget"));
        }
        if let Some(v) = self.n_values {
            cfg.n_values = v;
        }
        if self.gamma0.is_some() {
            cfg.gamma0 = self.gamma0;
        }
        if self.mu_rule.is_some() {
            cfg.mu_rule = self.mu_rule;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        if self.iterations_cap.is_some() || self.evals_cap.is_some() {
            cfg.iterations_cap = self.iterations_cap;
            cfg.evals_cap = self.evals_cap;
        }
        if let Some(p) = self.noise_p {
            cfg.noise_p = p;
        }
        if let Some(s) = self.master_seed {
            cfg.master_seed = s;
        }
        if let Some(d) = self.output_dir {
            cfg.output_dir = d;
        }
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(t) = self.record_traces {
            cfg.record_traces = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for each scenario.
    pub fn defaults(scenario: Scenario) -> Self {
        let base = Self {
            scenario,
            n_values: vec![100],
            gamma0: Some(0.1),
            mu_rule: Some(MuRule::CLogN(5.0)),
            replications: 20,
            iterations_cap: None,
            evals_cap: Some(EvalsCap::PerNSquared(50.0)),
            noise_p: 0.0,
            master_seed: 2019,
            output_dir: format!("out/{}", scenario.name()),
            delta: 0.1,
            epsilon: 0.1,
            record_traces: true,
        };
        match scenario {
            Scenario::LowPressure => Self {
                gamma0: Some(0.5),
                mu_rule: Some(MuRule::N),
                iterations_cap: Some(5000),
                evals_cap: None,
                delta: 0.2,
                ..base
            },
            Scenario::HighPressure => base,
            Scenario::RuntimeScaling => Self {
                n_values: vec![100, 200, 300, 400, 500],
                replications: 30,
                record_traces: false,
                ..base
            },
            Scenario::NoisyScaling => Self {
                n_values: vec![50, 100, 200, 400],
                gamma0: None,
                mu_rule: None,
                replications: 30,
                evals_cap: Some(EvalsCap::PerNSquared(100.0)),
                noise_p: 0.1,
                record_traces: false,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(config_err("replications: must be at least 1"));
        }
        if self.n_values.is_empty() {
            return Err(config_err("n_values: must not be empty"));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 2) {
            return Err(config_err(format!("n_values: n = {n} violates n >= 2")));
        }
        match (self.scenario, self.gamma0, self.mu_rule) {
            (Scenario::NoisyScaling, None, None) => {}
            (Scenario::NoisyScaling, _, _) => {
                return Err(config_err("gamma0/mu_rule: not used by noisy_scaling"));
            }
            (_, Some(g), Some(_)) if g > 0.0 && g < 1.0 => {}
            (_, Some(g), Some(_)) => return Err(config_err(format!("gamma0: {g} outside (0, 1)"))),
            (_, None, _) => return Err(config_err("gamma0: missing")),
            (_, _, None) => return Err(config_err("mu_rule: missing")),
        }
        if let Some(MuRule::CLogN(c)) = self.mu_rule {
            if c.is_nan() || c <= 0.0 {
                return Err(config_err(format!("mu_rule.c_log_n: {c} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.noise_p) {
            return Err(config_err(format!("noise_p: {} outside [0, 1)", self.noise_p)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config_err(format!("delta: {} outside (0, 1)", self.delta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(config_err(format!("epsilon: {} outside (0, 1)", self.epsilon)));
        }
        match (self.iterations_cap, self.evals_cap) {
            (Some(0), _) => return Err(config_err("iterations_cap: must be positive")),
            (Some(_), Some(_)) => return Err(config_err("iterations_cap/evals_cap: give at most one budget")),
            (None, None) => return Err(config_err("iterations_cap/evals_cap: a budget is required")),
            _ => {}
        }
        for &n in &self.n_values {
            self.size_for(n)?;
        }
        Ok(())
    }

    /// Population sizes, budget and thresholds at problem size `n`.
    pub fn size_for(&self, n: usize) -> Result<ResolvedSize> {
        let (lambda, mu, mu_raw) = match (self.scenario, self.gamma0, self.mu_rule) {
            (Scenario::NoisyScaling, _, _) => {
                let lambda = ((n as f64) / (n as f64).ln()).ceil() as usize;
                let mu_raw = lambda as f64 / (4.0 * std::f64::consts::E * (1.0 + self.delta));
                let mu = (mu_raw.floor() as usize).max(2);
                (lambda.max(mu + 1), mu, mu_raw)
            }
            (_, Some(gamma0), Some(rule)) => {
                let mu = rule.mu(n);
                let lambda = (mu as f64 / gamma0).round() as usize;
                (lambda.max(mu + 1), mu, rule.raw(n))
            }
            _ => return Err(config_err("gamma0/mu_rule: missing")),
        };
        let max_evals = match (self.iterations_cap, self.evals_cap) {
            (Some(iters), _) => iters * lambda as u64,
            (None, Some(cap)) => cap.for_n(n),
            (None, None) => return Err(config_err("iterations_cap/evals_cap: a budget is required")),
        };
        if max_evals < lambda as u64 {
            return Err(config_err(format!(
                "budget of {max_evals} evaluations at n = {n} is below lambda = {lambda}"
            )));
        }
        let gamma_star = mu as f64 / lambda as f64;
        let th = thresholds(n, gamma_star, self.delta)?.with_epsilon(self.epsilon);
        Ok(ResolvedSize {
            n,
            lambda,
            mu,
            mu_raw,
            gamma_star,
            max_evals,
            thresholds: th,
        })
    }

    /// Thresholds at the nominal pressure `gamma0` (the reference lines of
    /// the pressure experiments); `None` for `noisy_scaling`.
    pub fn nominal_thresholds(&self, n: usize) -> Result<Option<ThresholdParams>> {
        self.gamma0
            .map(|g| thresholds(n, g, self.delta).map(|t| t.with_epsilon(self.epsilon)))
            .transpose()
    }

    /// Human-readable notes on regime conditions the configuration violates.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let Some(g) = self.gamma0 else { return out };
        match self.scenario {
            Scenario::LowPressure => {
                let bound = low_pressure_bound(self.delta, self.epsilon);
                if g < bound {
                    out.push(format!(
                        "gamma0 = {g} is below the low-pressure bound (1 + delta) / e^(1 - epsilon) = {bound:.4}"
                    ));
                }
            }
            Scenario::HighPressure | Scenario::RuntimeScaling => {
                for &n in &self.n_values {
                    let bound = high_pressure_bound(n, self.delta);
                    if g > bound {
                        out.push(format!(
                            "gamma0 = {g} exceeds the high-pressure bound (1 - 1/n)(1 - delta) / e = {bound:.4} at n = {n}"
                        ));
                    }
                }
            }
            Scenario::NoisyScaling => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSize {
    pub n: usize,
    pub lambda: usize,
    pub mu: usize,
    /// `mu` before rounding.
    pub mu_raw: f64,
    pub gamma_star: f64,
    pub max_evals: u64,
    pub thresholds: ThresholdParams,
}
