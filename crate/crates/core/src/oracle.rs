//! Exact reference computations for small instances.
//!
//! Two independent routes to the law of the level counts `(C_1, ..., C_n)` of
//! one sampled population:
//!
//! * the binomial chain `C_1 ~ Bin(lambda, p_1)`, `C_i | C_{i-1} ~ Bin(C_{i-1}, p_i)`,
//!   which reveals the population one bit position at a time;
//! * brute-force enumeration of all `2^(lambda n)` populations.
//!
//! Plus the exact expected maximum of `k` i.i.d. LeadingOnes values, a
//! statistical harness comparing empirical frequencies to an exact law, and
//! the tail-marginal estimate used to check that positions far beyond the
//! selection front stay near 1/2.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::engine::MarginalTrace;
use crate::error::{arg_err, Error, Result};
use crate::instrumentation::ThresholdParams;
use crate::model::{Bitstring, ProbabilityVector};
use crate::objectives::{expected_noisy_fitness, leading_ones, noisy_leading_ones, NoiseConfig};
use crate::seeding::rng_from_seed;

pub const CHAIN_MAX_N: usize = 6;
pub const CHAIN_MAX_LAMBDA: usize = 8;
/// Largest `lambda * n` the brute-force enumerations accept.
pub const ENUMERATION_MAX_BITS: usize = 20;

// ---------------------------------------------------------------------------
// Exact distributions
// ---------------------------------------------------------------------------

/// A finite law over integer tuples, support in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub support: Vec<Vec<u32>>,
    pub probabilities: Vec<f64>,
}

impl ExactDistribution {
    pub fn from_map(map: BTreeMap<Vec<u32>, f64>) -> Result<Self> {
        let (support, probabilities): (Vec<_>, Vec<_>) = map.into_iter().unzip();
        let dist = Self {
            support,
            probabilities,
        };
        dist.check()?;
        Ok(dist)
    }

    fn check(&self) -> Result<()> {
        if self.probabilities.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(arg_err("negative or NaN probability"));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(arg_err(format!("probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn probability(&self, outcome: &[u32]) -> f64 {
        self.support
            .binary_search_by(|s| s.as_slice().cmp(outcome))
            .map(|i| self.probabilities[i])
            .unwrap_or(0.0)
    }

    /// Total-variation distance over the union of both supports.
    pub fn total_variation(&self, other: &ExactDistribution) -> f64 {
        let mut diff: BTreeMap<&[u32], f64> = BTreeMap::new();
        for (s, &p) in self.support.iter().zip(&self.probabilities) {
            *diff.entry(s).or_default() += p;
        }
        for (s, &p) in other.support.iter().zip(&other.probabilities) {
            *diff.entry(s).or_default() -= p;
        }
        0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
    }
}

fn binomial_coefficient(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn binomial_pmf(k: u32, trials: u32, p: f64) -> f64 {
    if k > trials {
        return 0.0;
    }
    binomial_coefficient(trials, k) * p.powi(k as i32) * (1.0 - p).powi((trials - k) as i32)
}

/// Law of `(C_1, ..., C_n)` by chaining conditional binomials.
pub fn exact_level_chain(model: &ProbabilityVector, lambda: usize) -> Result<ExactDistribution> {
    let n = model.n();
    if n > CHAIN_MAX_N || lambda > CHAIN_MAX_LAMBDA || lambda == 0 {
        return Err(Error::Infeasible(format!(
            "level chain needs 1 <= lambda <= {CHAIN_MAX_LAMBDA} and n <= {CHAIN_MAX_N}, got lambda = {lambda}, n = {n}"
        )));
    }
    let mut law: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    law.insert(Vec::new(), 1.0);
    for i in 0..n {
        let p = model.get(i);
        let mut next = BTreeMap::new();
        for (prefix, prob) in law {
            let parent = prefix.last().copied().unwrap_or(lambda as u32);
            for c in 0..=parent {
                let mut tuple = prefix.clone();
                tuple.push(c);
                *next.entry(tuple).or_insert(0.0) += prob * binomial_pmf(c, parent, p);
            }
        }
        law = next;
    }
    ExactDistribution::from_map(law)
}

/// Law of `(C_1, ..., C_n)` by enumerating every population.
pub fn enumerate_level_law(model: &ProbabilityVector, lambda: usize) -> Result<ExactDistribution> {
    let n = model.n();
    if lambda == 0 || lambda * n > ENUMERATION_MAX_BITS {
        return Err(Error::Infeasible(format!(
            "enumeration needs 1 <= lambda * n <= {ENUMERATION_MAX_BITS}, got {lambda} * {n}"
        )));
    }
    // Per-individual probability and fitness for each of the 2^n strings.
    let strings: Vec<(f64, usize)> = (0..1u64 << n)
        .map(|mask| {
            let x = Bitstring::from_mask(mask, n);
            (model.probability_of(&x), leading_ones(&x) as usize)
        })
        .collect();
    let mut law: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut digits = vec![0usize; lambda];
    loop {
        let mut prob = 1.0;
        let mut counts = vec![0u32; n];
        for &d in &digits {
            let (p, lo) = strings[d];
            prob *= p;
            for c in counts.iter_mut().take(lo) {
                *c += 1;
            }
        }
        *law.entry(counts).or_insert(0.0) += prob;

        // Odometer over lambda digits in base 2^n.
        let mut pos = 0;
        loop {
            if pos == lambda {
                return ExactDistribution::from_map(law);
            }
            digits[pos] += 1;
            if digits[pos] < strings.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Every model on the grid `{1/n, 1/2, 1 - 1/n}^n`.
pub fn margin_grid(n: usize) -> Vec<ProbabilityVector> {
    let levels = [1.0 / n as f64, 0.5, 1.0 - 1.0 / n as f64];
    let total = 3usize.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let marginals = (0..n)
                .map(|_| {
                    let l = levels[code % 3];
                    code /= 3;
                    l
                })
                .collect();
            ProbabilityVector::from_marginals(marginals).expect("grid values lie in [0, 1]")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub n: usize,
    pub lambda: usize,
    pub models: usize,
    pub max_tv: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares chain and enumeration on every model of the margin grid.
pub fn chain_check(n: usize, lambda: usize, tolerance: f64) -> Result<ChainReport> {
    if n < 2 {
        return Err(arg_err("margin grid needs n >= 2"));
    }
    if n > CHAIN_MAX_N || lambda == 0 || lambda > CHAIN_MAX_LAMBDA || lambda * n > ENUMERATION_MAX_BITS {
        return Err(Error::Infeasible(format!(
            "chain check needs n <= {CHAIN_MAX_N}, 1 <= lambda <= {CHAIN_MAX_LAMBDA} and lambda * n <= {ENUMERATION_MAX_BITS}, got n = {n}, lambda = {lambda}"
        )));
    }
    let grid = margin_grid(n);
    let mut max_tv: f64 = 0.0;
    for model in &grid {
        let chain = exact_level_chain(model, lambda)?;
        let brute = enumerate_level_law(model, lambda)?;
        max_tv = max_tv.max(chain.total_variation(&brute));
    }
    Ok(ChainReport {
        n,
        lambda,
        models: grid.len(),
        max_tv,
        tolerance,
        pass: max_tv < tolerance,
    })
}

// ---------------------------------------------------------------------------
// Expected maximum of leading ones
// ---------------------------------------------------------------------------

/// `E[max of k i.i.d. LeadingOnes values]` for strings of length `n` with
/// i.i.d. bits that are one with probability `q`:
/// `sum_{j=1..n} (1 - (1 - q^j)^k)`.
pub fn exact_expected_max_leading_ones(n: usize, k: u64, q: f64) -> Result<f64> {
    if k == 0 {
        return Err(arg_err("need at least one individual"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(arg_err(format!("q = {q} outside [0, 1]")));
    }
    Ok((1..=n)
        .map(|j| {
            // Pr(L >= j) = q^j; 1 - (1 - q^j)^k computed without cancellation.
            let reach = q.powi(j as i32);
            -((k as f64) * (-reach).ln_1p()).exp_m1()
        })
        .sum())
}

/// The same expectation by enumerating all `2^(k n)` joint outcomes.
pub fn enumerate_expected_max_leading_ones(n: usize, k: usize, q: f64) -> Result<f64> {
    if k == 0 || k * n > ENUMERATION_MAX_BITS {
        return Err(Error::Infeasible(format!(
            "enumeration needs 1 <= k * n <= {ENUMERATION_MAX_BITS}, got {k} * {n}"
        )));
    }
    let bits = k * n;
    let mut total = 0.0;
    for mask in 0..1u64 << bits {
        let ones = mask.count_ones() as i32;
        let prob = q.powi(ones) * (1.0 - q).powi(bits as i32 - ones);
        let best = (0..k)
            .map(|j| leading_ones(&Bitstring::from_mask(mask >> (j * n), n)))
            .max()
            .unwrap_or(0);
        total += prob * best as f64;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Empirical vs exact
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Largest admissible total-variation distance.
    pub tv: f64,
    /// Significance level of the chi-square goodness-of-fit test.
    pub chi_square_alpha: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            tv: 0.01,
            chi_square_alpha: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub samples: u64,
    pub tv: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// Compares observed counts, indexed like `exact.support`, with the exact law.
///
/// Cells with expected count below 5 are pooled into a single cell before
/// the chi-square statistic is formed.
pub fn empirical_vs_exact(counts: &[u64], exact: &ExactDistribution, tol: Tolerance) -> Result<Comparison> {
    if counts.len() != exact.support.len() {
        return Err(Error::SupportMismatch(format!(
            "{} observed cells against {} support points",
            counts.len(),
            exact.support.len()
        )));
    }
    let samples: u64 = counts.iter().sum();
    if samples == 0 {
        return Err(arg_err("no samples"));
    }
    let total = samples as f64;
    let tv = 0.5
        * counts
            .iter()
            .zip(&exact.probabilities)
            .map(|(&c, &p)| (c as f64 / total - p).abs())
            .sum::<f64>();

    let mut chi_square = 0.0;
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(&exact.probabilities) {
        let expected = p * total;
        if expected < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += expected;
        } else {
            chi_square += (c as f64 - expected).powi(2) / expected;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        chi_square += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    } else if pooled_obs > 0.0 {
        chi_square = f64::INFINITY;
    }
    let dof = cells.saturating_sub(1);
    let p_value = if chi_square.is_infinite() {
        0.0
    } else if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64)
            .map_err(|e| arg_err(e.to_string()))?
            .sf(chi_square)
    };
    Ok(Comparison {
        samples,
        tv,
        chi_square,
        dof,
        p_value,
        pass: tv < tol.tv && p_value >= tol.chi_square_alpha,
    })
}

// ---------------------------------------------------------------------------
// Tail marginals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailMarginalEstimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub runs: usize,
    pub samples: usize,
}

/// Mean marginal over `positions` (0-based) and iterations in `iterations`.
///
/// Runs are the independent units: the interval is a normal approximation
/// over the per-run means, since snapshots within a run are autocorrelated.
/// The positions must lie beyond `beta + 2` (1-based), where selection no
/// longer reaches.
pub fn tail_marginal_frequency_test(
    runs: &[MarginalTrace],
    positions: Range<usize>,
    iterations: Range<u64>,
    thresholds: &ThresholdParams,
) -> Result<TailMarginalEstimate> {
    if positions.is_empty() {
        return Err(arg_err("empty position range"));
    }
    if ((positions.start + 1) as f64) <= thresholds.beta + 2.0 {
        return Err(arg_err(format!(
            "position {} (1-based) is not beyond beta + 2 = {:.3}",
            positions.start + 1,
            thresholds.beta + 2.0
        )));
    }
    let mut run_means = Vec::with_capacity(runs.len());
    let mut samples = 0usize;
    for run in runs {
        if positions.start < run.positions.start || positions.end > run.positions.end {
            return Err(arg_err(format!(
                "positions {positions:?} not recorded (trace holds {:?})",
                run.positions
            )));
        }
        let lo = positions.start - run.positions.start;
        let hi = positions.end - run.positions.start;
        let values: Vec<f64> = run
            .snapshots
            .iter()
            .filter(|(t, _)| iterations.contains(t))
            .flat_map(|(_, m)| m[lo..hi].iter().copied())
            .collect();
        if !values.is_empty() {
            samples += values.len();
            run_means.push(values.iter().sum::<f64>() / values.len() as f64);
        }
    }
    if run_means.is_empty() {
        return Err(arg_err("no snapshots inside the iteration window"));
    }
    let r = run_means.len() as f64;
    let mean = run_means.iter().sum::<f64>() / r;
    let half_width = if run_means.len() > 1 {
        let var = run_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1.0);
        1.96 * (var / r).sqrt()
    } else {
        0.0
    };
    Ok(TailMarginalEstimate {
        mean,
        ci_low: mean - half_width,
        ci_high: mean + half_width,
        runs: run_means.len(),
        samples,
    })
}

// ---------------------------------------------------------------------------
// Noisy fitness expectation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseExpectationReport {
    pub x: String,
    pub p: f64,
    pub samples: u64,
    pub expected: f64,
    pub mean: f64,
    pub std_err: f64,
    pub pass: bool,
}

/// Monte-Carlo mean of the noisy fitness against the exact expectation;
/// passes when they agree within three standard errors.
pub fn noise_expectation_check(x: &Bitstring, noise: NoiseConfig, samples: u64, seed: u64) -> Result<NoiseExpectationReport> {
    if samples < 2 {
        return Err(arg_err("need at least two samples"));
    }
    let mut rng = rng_from_seed(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let f = noisy_leading_ones(x, noise, &mut rng) as f64;
        sum += f;
        sum_sq += f * f;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    let std_err = (var / m).sqrt();
    let expected = expected_noisy_fitness(x, noise);
    let pass = (mean - expected).abs() <= 3.0 * std_err || (std_err == 0.0 && mean == expected);
    Ok(NoiseExpectationReport {
        x: x.to_string(),
        p: noise.p(),
        samples,
        expected,
        mean,
        std_err,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrumentation::thresholds;

    fn pv(m: &[f64]) -> ProbabilityVector {
        ProbabilityVector::from_marginals(m.to_vec()).unwrap()
    }

    #[test]
    fn chain_small_examples() {
        let d = exact_level_chain(&pv(&[0.5]), 2).unwrap();
        assert_eq!(d.support, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(d.probabilities, vec![0.25, 0.5, 0.25]);

        let d = exact_level_chain(&pv(&[0.5, 0.5]), 2).unwrap();
        assert!((d.probability(&[2, 1]) - 0.125).abs() < 1e-15);
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_rejects_infeasible() {
        assert!(matches!(
            exact_level_chain(&ProbabilityVector::uniform(20).unwrap(), 4),
            Err(Error::Infeasible(_))
        ));
        assert!(exact_level_chain(&ProbabilityVector::uniform(3).unwrap(), 9).is_err());
        assert!(enumerate_level_law(&ProbabilityVector::uniform(6).unwrap(), 4).is_err());
    }

    #[test]
    fn chain_matches_enumeration_off_grid() {
        let model = pv(&[0.3, 0.8, 0.55]);
        let chain = exact_level_chain(&model, 4).unwrap();
        let brute = enumerate_level_law(&model, 4).unwrap();
        assert!(chain.total_variation(&brute) < 1e-12);
    }

    #[test]
    fn grid_size() {
        assert_eq!(margin_grid(3).len(), 27);
        assert!(margin_grid(2).iter().all(|m| m.marginals() == [0.5, 0.5]));
    }

    #[test]
    fn expected_max_examples() {
        let v = exact_expected_max_leading_ones(3, 2, 0.5).unwrap();
        assert!((v - 91.0 / 64.0).abs() < 1e-15);
        assert_eq!(exact_expected_max_leading_ones(1, 1, 0.5).unwrap(), 0.5);
        for k in [1, 2, 7, 100] {
            assert_eq!(exact_expected_max_leading_ones(13, k, 1.0).unwrap(), 13.0);
        }
        assert_eq!(exact_expected_max_leading_ones(5, 3, 0.0).unwrap(), 0.0);
        assert!(exact_expected_max_leading_ones(5, 0, 0.5).is_err());
    }

    #[test]
    fn expected_max_matches_enumeration() {
        for (n, k, q) in [(3, 2, 0.5), (4, 3, 0.3), (2, 5, 0.9), (5, 4, 0.5)] {
            let closed = exact_expected_max_leading_ones(n, k as u64, q).unwrap();
            let brute = enumerate_expected_max_leading_ones(n, k, q).unwrap();
            assert!((closed - brute).abs() < 1e-12, "n={n} k={k} q={q}");
        }
    }

    #[test]
    fn expected_max_monotone() {
        let mut prev = 0.0;
        for k in 1..200 {
            let v = exact_expected_max_leading_ones(40, k, 0.5).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let mut prev = 0.0;
        for step in 0..=100 {
            let v = exact_expected_max_leading_ones(40, 8, step as f64 / 100.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn compare_to_itself() {
        let exact = exact_level_chain(&pv(&[0.5, 0.5]), 3).unwrap();
        let counts: Vec<u64> = exact.probabilities.iter().map(|p| (p * 64_000.0).round() as u64).collect();
        let c = empirical_vs_exact(&counts, &exact, Tolerance::default()).unwrap();
        assert!(c.tv < 1e-12);
        assert!(c.pass);
    }

    #[test]
    fn support_mismatch_is_an_error() {
        let exact = exact_level_chain(&pv(&[0.5]), 2).unwrap();
        assert!(matches!(
            empirical_vs_exact(&[1, 2], &exact, Tolerance::default()),
            Err(Error::SupportMismatch(_))
        ));
    }

    #[test]
    fn unseen_cell_with_zero_probability_fails() {
        let exact = ExactDistribution {
            support: vec![vec![0], vec![1]],
            probabilities: vec![1.0, 0.0],
        };
        let c = empirical_vs_exact(&[99, 1], &exact, Tolerance::default()).unwrap();
        assert!(!c.pass);
    }

    fn snapshots(values: &[(u64, f64)], width: usize) -> MarginalTrace {
        MarginalTrace {
            positions: 89..89 + width,
            snapshots: values.iter().map(|&(t, v)| (t, vec![v; width])).collect(),
        }
    }

    #[test]
    fn tail_marginal_single_snapshot() {
        let th = thresholds(100, 0.5, 0.2).unwrap();
        let run = snapshots(&[(0, 0.5)], 11);
        let est = tail_marginal_frequency_test(&[run], 89..100, 0..5000, &th).unwrap();
        assert_eq!(est.mean, 0.5);
        assert_eq!(est.samples, 11);
    }

    #[test]
    fn tail_marginal_precondition() {
        let th = thresholds(100, 0.5, 0.2).unwrap();
        let run = MarginalTrace {
            positions: 0..100,
            snapshots: vec![(0, vec![0.5; 100])],
        };
        assert!(tail_marginal_frequency_test(std::slice::from_ref(&run), 0..1, 0..10, &th).is_err());
        // High pressure: beta lies beyond n, so no position qualifies.
        let high = thresholds(100, 0.1, 0.1).unwrap();
        assert!(tail_marginal_frequency_test(&[run], 0..1, 0..10, &high).is_err());
    }

    #[test]
    fn tail_marginal_window_and_ci() {
        let th = thresholds(100, 0.5, 0.2).unwrap();
        let a = snapshots(&[(0, 0.1), (10, 0.4), (11, 0.4)], 11);
        let b = snapshots(&[(0, 0.1), (10, 0.6), (11, 0.6)], 11);
        let est = tail_marginal_frequency_test(&[a, b], 89..100, 10..20, &th).unwrap();
        assert!((est.mean - 0.5).abs() < 1e-12);
        assert!(est.ci_low < 0.5 && est.ci_high > 0.5);
        assert_eq!(est.runs, 2);
    }

    #[test]
    fn noise_expectation_report() {
        let x: Bitstring = "111".parse().unwrap();
        let r = noise_expectation_check(&x, NoiseConfig::new(0.3).unwrap(), 200_000, 4).unwrap();
        assert!((r.expected - 2.4).abs() < 1e-12);
        assert!(r.pass, "{r:?}");
        let r = noise_expectation_check(&x, NoiseConfig::NONE, 10, 4).unwrap();
        assert!(r.pass);
        assert_eq!(r.mean, 3.0);
    }
}
