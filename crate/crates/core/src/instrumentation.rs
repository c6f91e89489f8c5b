//! Per-iteration analysis quantities and the closed-form thresholds.
//!
//! Level counts follow the leading-ones block structure: `C_i` is the number
//! of offspring with at least `i` leading ones and `D_i` the number with
//! exactly `i - 1` leading ones, so `C_{i-1} = C_i + D_i` with `C_0 = lambda`.
//! `Z_t` is the deepest level still holding `mu` offspring and `Z_t*` the
//! deepest level holding any. All of these are computed from true fitness,
//! also in noisy runs.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::model::Population;

// ---------------------------------------------------------------------------
// Level counts
// ---------------------------------------------------------------------------

/// `C_1..C_n` stored up to `Z*`; deeper levels are implicitly zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    n: usize,
    lambda: u32,
    /// `at_least[i - 1] = C_i` for `i` in `1..=z_star`.
    at_least: Vec<u32>,
}

impl LevelCounts {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    /// `C_i` for `i` in `0..=n`, with `C_0 = lambda`.
    pub fn c(&self, i: usize) -> u32 {
        assert!(i <= self.n, "level {i} beyond n = {}", self.n);
        match i {
            0 => self.lambda,
            _ => self.at_least.get(i - 1).copied().unwrap_or(0),
        }
    }

    /// `D_i` for `i` in `1..=n`.
    pub fn d(&self, i: usize) -> u32 {
        assert!((1..=self.n).contains(&i), "block {i} outside 1..={}", self.n);
        self.c(i - 1) - self.c(i)
    }

    pub fn c_vec(&self) -> Vec<u32> {
        (1..=self.n).map(|i| self.c(i)).collect()
    }

    pub fn d_vec(&self) -> Vec<u32> {
        (1..=self.n).map(|i| self.d(i)).collect()
    }

    pub fn z_star(&self) -> usize {
        self.at_least.len()
    }

    /// `max{i : C_i >= mu}`, or 0 when `C_1 < mu`.
    pub fn z_mu(&self, mu: usize) -> usize {
        self.at_least.iter().take_while(|&&c| c as usize >= mu).count()
    }
}

/// Level counts of a population from its true fitness values.
pub fn level_counts(fitness_true: &[u32], n: usize) -> Result<LevelCounts> {
    let mut hist = vec![0u32; n + 1];
    for &f in fitness_true {
        let f = f as usize;
        if f > n {
            return Err(arg_err(format!("fitness {f} exceeds n = {n}")));
        }
        hist[f] += 1;
    }
    let z_star = hist.iter().rposition(|&h| h > 0).unwrap_or(0);
    let mut at_least = vec![0u32; z_star];
    let mut acc = 0u32;
    for i in (1..=z_star).rev() {
        acc += hist[i];
        at_least[i - 1] = acc;
    }
    Ok(LevelCounts {
        n,
        lambda: fitness_true.len() as u32,
        at_least,
    })
}

pub fn population_level_counts(pop: &Population, n: usize) -> Result<LevelCounts> {
    if !pop.is_evaluated() {
        return Err(arg_err("population must be evaluated"));
    }
    level_counts(pop.fitness_true(), n)
}

/// `(Z_t, Z_t*)` from the level counts.
pub fn z_values(levels: &LevelCounts, mu: usize) -> (usize, usize) {
    (levels.z_mu(mu), levels.z_star())
}

/// Individuals with true fitness below `j` whose noisy fitness reaches `j`.
pub fn noisy_misrank_count(pop: &Population, j: u32) -> Result<u32> {
    if !pop.is_evaluated() {
        return Err(arg_err("population must be evaluated"));
    }
    Ok(pop
        .fitness_true()
        .iter()
        .zip(pop.fitness_noisy())
        .filter(|(&f, &noisy)| f < j && noisy >= j)
        .count() as u32)
}

// ---------------------------------------------------------------------------
// Iteration statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub t: u64,
    pub levels: LevelCounts,
    pub z_mu: usize,
    pub z_star: usize,
    pub best_true: u32,
    /// Misranked individuals at level `z_mu + 1`.
    pub misranked: u32,
    /// Evaluations spent up to and including this iteration.
    pub evals: u64,
}

impl IterationStats {
    pub fn from_population(pop: &Population, n: usize, mu: usize, t: u64, evals: u64) -> Result<Self> {
        let levels = population_level_counts(pop, n)?;
        let (z_mu, z_star) = z_values(&levels, mu);
        let misranked = noisy_misrank_count(pop, z_mu as u32 + 1)?;
        Ok(Self {
            t,
            z_mu,
            z_star,
            best_true: pop.best_true(),
            misranked,
            evals,
            levels,
        })
    }
}

// ---------------------------------------------------------------------------
// Thresholds
// ---------------------------------------------------------------------------

/// The lower/upper thresholds around the equilibrium depth of `Z_t`.
///
/// With `L = ln(1 - 1/n)`: `alpha = ln(gamma / (1 - delta)) / L`,
/// `beta = ln(gamma / (1 + delta)) / L` and `kappa = ln(gamma) / L`.
/// `alpha` only exists while `gamma / (1 - delta) < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub n: usize,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub kappa: f64,
}

pub fn thresholds(n: usize, gamma: f64, delta: f64) -> Result<ThresholdParams> {
    if n < 2 {
        return Err(arg_err(format!("n = {n} must be at least 2")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(arg_err(format!("selective pressure {gamma} outside (0, 1)")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(arg_err(format!("delta {delta} outside [0, 1)")));
    }
    let log_base = (1.0 - 1.0 / n as f64).ln();
    let upper_ratio = gamma / (1.0 - delta);
    let alpha = (upper_ratio < 1.0).then(|| upper_ratio.ln() / log_base);
    Ok(ThresholdParams {
        n,
        gamma,
        delta,
        epsilon: None,
        alpha,
        beta: (gamma / (1.0 + delta)).ln() / log_base,
        kappa: gamma.ln() / log_base,
    })
}

impl ThresholdParams {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }
}

/// Smallest selective pressure `(1 + delta) / e^(1 - epsilon)` of the
/// low-pressure (stalling) regime.
pub fn low_pressure_bound(delta: f64, epsilon: f64) -> f64 {
    (1.0 + delta) / (1.0 - epsilon).exp()
}

/// Largest selective pressure `(1 - 1/n)(1 - delta) / e` of the
/// high-pressure regime.
pub fn high_pressure_bound(n: usize, delta: f64) -> f64 {
    (1.0 - 1.0 / n as f64) * (1.0 - delta) / std::f64::consts::E
}

// ---------------------------------------------------------------------------
// Trace summaries
// ---------------------------------------------------------------------------

/// Iterations over which `Z_t` is time-averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Records whose iteration index lies in the second half of the trace.
    #[default]
    SecondHalf,
    /// The last `k` iterations.
    Last(u64),
    /// Iterations `start..end`.
    Range(u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    /// First iteration with `Z_t >= alpha`.
    pub tau: Option<u64>,
    /// Mean of `Z_{t+1} - Z_t` over consecutive records.
    pub mean_drift: f64,
    pub time_avg_z: f64,
    pub max_z_star: usize,
}

pub fn summarize_trace(
    trace: &[IterationStats],
    thresholds: &ThresholdParams,
    window: Window,
) -> Result<TraceSummary> {
    let (first, last) = match (trace.first(), trace.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(arg_err("cannot summarize an empty trace")),
    };
    let tau = thresholds
        .alpha
        .and_then(|alpha| trace.iter().find(|s| s.z_mu as f64 >= alpha).map(|s| s.t));
    let mean_drift = if trace.len() < 2 {
        0.0
    } else {
        let total: f64 = trace
            .windows(2)
            .map(|w| w[1].z_mu as f64 - w[0].z_mu as f64)
            .sum();
        total / (trace.len() - 1) as f64
    };
    let (lo, hi) = match window {
        Window::SecondHalf => (first + (last - first).div_ceil(2), last + 1),
        Window::Last(k) => ((last + 1).saturating_sub(k), last + 1),
        Window::Range(a, b) => (a, b),
    };
    let in_window: Vec<f64> = trace
        .iter()
        .filter(|s| s.t >= lo && s.t < hi)
        .map(|s| s.z_mu as f64)
        .collect();
    let time_avg_z = if in_window.is_empty() {
        f64::NAN
    } else {
        in_window.iter().sum::<f64>() / in_window.len() as f64
    };
    Ok(TraceSummary {
        tau,
        mean_drift,
        time_avg_z,
        max_z_star: trace.iter().map(|s| s.z_star).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Bitstring;
    use proptest::prelude::*;

    #[test]
    fn level_count_examples() {
        // {111, 110, 011, 000}
        let lc = level_counts(&[3, 2, 0, 0], 3).unwrap();
        assert_eq!(lc.c_vec(), vec![2, 2, 1]);
        assert_eq!(lc.d_vec(), vec![2, 0, 1]);
        assert_eq!(z_values(&lc, 2), (2, 3));

        let zeros = level_counts(&[0; 5], 4).unwrap();
        assert_eq!(zeros.c_vec(), vec![0; 4]);
        assert_eq!(zeros.d_vec(), vec![5, 0, 0, 0]);
        assert_eq!(z_values(&zeros, 1), (0, 0));
        assert_eq!(z_values(&zeros, 3), (0, 0));

        let ones = level_counts(&[4; 5], 4).unwrap();
        assert_eq!(ones.c_vec(), vec![5; 4]);
        assert_eq!(ones.d_vec(), vec![0; 4]);
        assert_eq!(z_values(&ones, 5), (4, 4));
        assert_eq!(z_values(&ones, 1), (4, 4));
    }

    #[test]
    fn fitness_above_n_rejected() {
        assert!(level_counts(&[4], 3).is_err());
    }

    #[test]
    fn threshold_reference_values() {
        let t = thresholds(100, 0.5, 0.2).unwrap();
        let alpha = t.alpha.unwrap();
        assert_eq!(alpha.round(), 47.0);
        assert_eq!(t.beta.round(), 87.0);
        assert!((alpha - 46.765).abs() < 1e-2);
        assert!((t.beta - 87.11).abs() < 1e-2);
        // ln(0.5) / ln(0.99) = 68.967563...
        assert!((t.kappa - 68.967_563_0).abs() < 1e-6);
    }

    #[test]
    fn thresholds_coincide_without_delta() {
        let t = thresholds(50, 0.3, 0.0).unwrap();
        assert_eq!(t.alpha.unwrap(), t.kappa);
        assert_eq!(t.beta, t.kappa);
    }

    #[test]
    fn alpha_undefined_when_ratio_reaches_one() {
        let t = thresholds(100, 0.9, 0.2).unwrap();
        assert!(t.alpha.is_none());
        assert!(thresholds(100, 1.0, 0.2).is_err());
        assert!(thresholds(1, 0.5, 0.2).is_err());
    }

    #[test]
    fn misrank_examples() {
        let pop = Population::with_fitness(vec!["011".parse().unwrap()], vec![0], vec![3]).unwrap();
        assert_eq!(noisy_misrank_count(&pop, 1).unwrap(), 1);
        let members: Vec<Bitstring> = ["110", "111", "000"].iter().map(|s| s.parse().unwrap()).collect();
        let clean = Population::with_fitness(members, vec![2, 3, 0], vec![2, 3, 0]).unwrap();
        for j in 0..=4 {
            assert_eq!(noisy_misrank_count(&clean, j).unwrap(), 0);
        }
    }

    fn stats_with_z(z: &[usize]) -> Vec<IterationStats> {
        z.iter()
            .enumerate()
            .map(|(t, &z)| IterationStats {
                t: t as u64,
                levels: level_counts(&[z as u32], 100).unwrap(),
                z_mu: z,
                z_star: z,
                best_true: z as u32,
                misranked: 0,
                evals: (t as u64 + 1) * 10,
            })
            .collect()
    }

    #[test]
    fn summary_examples() {
        let t = thresholds(100, 0.5, 0.2).unwrap();
        let s = summarize_trace(&stats_with_z(&[10, 20, 50]), &t, Window::default()).unwrap();
        assert_eq!(s.tau, Some(2));
        assert_eq!(s.max_z_star, 50);

        let s = summarize_trace(&stats_with_z(&[7; 6]), &t, Window::default()).unwrap();
        assert_eq!(s.mean_drift, 0.0);
        assert_eq!(s.tau, None);
        assert_eq!(s.time_avg_z, 7.0);

        let s = summarize_trace(&stats_with_z(&[1, 2, 3, 4, 5, 6]), &t, Window::default()).unwrap();
        assert_eq!(s.mean_drift, 1.0);
        // second half: t = 3, 4, 5
        assert_eq!(s.time_avg_z, 5.0);
        let s = summarize_trace(&stats_with_z(&[1, 2, 3, 4, 5, 6]), &t, Window::Last(2)).unwrap();
        assert_eq!(s.time_avg_z, 5.5);
        let s = summarize_trace(&stats_with_z(&[1, 2, 3, 4, 5, 6]), &t, Window::Range(0, 2)).unwrap();
        assert_eq!(s.time_avg_z, 1.5);

        assert!(summarize_trace(&[], &t, Window::default()).is_err());
    }

    proptest! {
        #[test]
        fn counting_identity(fit in prop::collection::vec(0u32..=12, 1..60), mu in 1usize..60) {
            let n = 12;
            let lc = level_counts(&fit, n).unwrap();
            prop_assert_eq!(lc.c(0) as usize, fit.len());
            for i in 1..=n {
                prop_assert_eq!(lc.c(i - 1), lc.c(i) + lc.d(i));
                prop_assert!(lc.c(i) <= lc.c(i - 1));
                let brute = fit.iter().filter(|&&f| f as usize >= i).count() as u32;
                prop_assert_eq!(lc.c(i), brute);
            }
            let (z_mu, z_star) = z_values(&lc, mu);
            prop_assert!(z_mu <= z_star && z_star <= n);
            prop_assert_eq!(z_star as u32, *fit.iter().max().unwrap());
        }

        #[test]
        fn alpha_kappa_beta_ordered(n in 2usize..5000, gamma in 0.001f64..0.999, delta in 0.001f64..0.999) {
            let t = thresholds(n, gamma, delta).unwrap();
            if let Some(alpha) = t.alpha {
                prop_assert!(alpha <= t.kappa);
            }
            prop_assert!(t.kappa <= t.beta);
        }
    }
}
