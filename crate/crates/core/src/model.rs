//! Bitstrings, the marginal probability model and population sampling.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use crate::error::{arg_err, Result};

// ---------------------------------------------------------------------------
// Bitstring
// ---------------------------------------------------------------------------

/// Fixed-length bitstring, packed into 64-bit words.
///
/// Bit `i` (0-based) lives in word `i / 64` at bit `i % 64`, so the leading
/// (lowest-index) bits are the low bits of the first word.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitstring {
    words: Vec<u64>,
    len: usize,
}

impl Bitstring {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut x = Self::zeros(len);
        for i in 0..len {
            x.set(i, true);
        }
        x
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut x = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            x.set(i, b);
        }
        x
    }

    /// Bitstring of length `len` whose bit `i` is bit `i` of `mask`.
    pub fn from_mask(mask: u64, len: usize) -> Self {
        assert!(len <= 64, "from_mask supports at most 64 bits");
        let mut x = Self::zeros(len);
        if len > 0 {
            let keep = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
            x.words[0] = mask & keep;
        }
        x
    }

    pub(crate) fn from_words(words: Vec<u64>, len: usize) -> Self {
        debug_assert_eq!(words.len(), len.div_ceil(64));
        Self { words, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let b = self.get(i);
        self.set(i, !b);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        self.iter().collect()
    }

    /// Number of consecutive ones starting at position `from`.
    pub fn ones_run_from(&self, from: usize) -> usize {
        if from >= self.len {
            return 0;
        }
        let mut word_idx = from / 64;
        let mut shift = from % 64;
        let mut run = 0;
        while word_idx < self.words.len() {
            let w = self.words[word_idx] >> shift;
            let avail = 64 - shift;
            let t = (w.trailing_ones() as usize).min(avail);
            run += t;
            if t < avail {
                break;
            }
            word_idx += 1;
            shift = 0;
        }
        // Padding bits above `len` are always zero, but clamp anyway.
        run.min(self.len - from)
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bitstring({self})")
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bitstring {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(arg_err(format!("bitstring contains '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bits(&bits))
    }
}

// ---------------------------------------------------------------------------
// Probability model
// ---------------------------------------------------------------------------

/// `max(1/n, min(1 - 1/n, value))` for `value` in `[0, 1]`.
pub fn clamp_to_margins(value: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&value) {
        return Err(arg_err(format!("value {value} outside [0, 1]")));
    }
    if n == 0 {
        return Err(arg_err("problem size must be positive"));
    }
    Ok(clamp_unchecked(value, n))
}

#[inline]
fn clamp_unchecked(value: f64, n: usize) -> f64 {
    let lower = 1.0 / n as f64;
    let upper = 1.0 - lower;
    value.min(upper).max(lower)
}

/// Per-bit one-probabilities, each kept inside `[1/n, 1 - 1/n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    marginals: Vec<f64>,
}

impl ProbabilityVector {
    /// The uniform starting model `(1/2, ..., 1/2)`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(arg_err(format!(
                "problem size n = {n} must be at least 2 for the margins [1/n, 1-1/n]"
            )));
        }
        Ok(Self {
            marginals: vec![0.5; n],
        })
    }

    /// Arbitrary marginals in `[0, 1]`. Used by the exact oracles, which
    /// also evaluate models off the margin grid.
    pub fn from_marginals(marginals: Vec<f64>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(arg_err("model needs at least one marginal"));
        }
        if let Some(bad) = marginals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(arg_err(format!("marginal {bad} outside [0, 1]")));
        }
        Ok(Self { marginals })
    }

    /// Builds the next model from per-position ones counts among `mu`
    /// selected individuals, clamped to the margins.
    pub fn from_ones_counts(ones: &[u32], mu: usize) -> Result<Self> {
        let n = ones.len();
        if n < 2 {
            return Err(arg_err("problem size must be at least 2"));
        }
        if mu == 0 {
            return Err(arg_err("mu must be positive"));
        }
        if let Some(&x) = ones.iter().find(|&&x| x as usize > mu) {
            return Err(arg_err(format!("ones count {x} exceeds mu = {mu}")));
        }
        let marginals = ones
            .iter()
            .map(|&x| clamp_unchecked(x as f64 / mu as f64, n))
            .collect();
        Ok(Self { marginals })
    }

    pub fn n(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    pub fn get(&self, i: usize) -> f64 {
        self.marginals[i]
    }

    pub fn within_margins(&self) -> bool {
        let n = self.n() as f64;
        let (lo, hi) = (1.0 / n, 1.0 - 1.0 / n);
        self.marginals.iter().all(|&p| p >= lo && p <= hi)
    }

    /// Probability of sampling `x` under the product distribution.
    pub fn probability_of(&self, x: &Bitstring) -> f64 {
        assert_eq!(x.len(), self.n());
        self.marginals
            .iter()
            .zip(x.iter())
            .map(|(&p, b)| if b { p } else { 1.0 - p })
            .product()
    }

    fn sampling_thresholds(&self) -> Vec<u64> {
        self.marginals.iter().map(|&p| bernoulli_threshold(p)).collect()
    }
}

/// A uniform `u64` falls below this value with probability `p` (up to 2^-64).
#[inline]
fn bernoulli_threshold(p: f64) -> u64 {
    if p >= 1.0 {
        u64::MAX
    } else {
        // 2^64 * p; the cast saturates and truncates toward zero.
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

fn sample_with_thresholds<R: RngCore + ?Sized>(thresholds: &[u64], rng: &mut R) -> Bitstring {
    let mut words = Vec::with_capacity(thresholds.len().div_ceil(64));
    for chunk in thresholds.chunks(64) {
        let mut acc = 0u64;
        for (j, &thr) in chunk.iter().enumerate() {
            acc |= ((rng.next_u64() < thr) as u64) << j;
        }
        words.push(acc);
    }
    Bitstring::from_words(words, thresholds.len())
}

/// Draws one bitstring from the product distribution of `model`.
///
/// Bits are drawn in position order, one `u64` per bit.
pub fn sample_individual<R: RngCore + ?Sized>(model: &ProbabilityVector, rng: &mut R) -> Bitstring {
    sample_with_thresholds(&model.sampling_thresholds(), rng)
}

/// Draws `lambda` independent individuals. Fitness fields stay empty.
pub fn sample_population<R: RngCore + ?Sized>(
    model: &ProbabilityVector,
    lambda: usize,
    rng: &mut R,
) -> Population {
    let thresholds = model.sampling_thresholds();
    let members = (0..lambda)
        .map(|_| sample_with_thresholds(&thresholds, rng))
        .collect();
    Population {
        members,
        fitness_true: Vec::new(),
        fitness_noisy: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Populations
// ---------------------------------------------------------------------------

/// Sampled individuals together with their noiseless and noisy fitness.
///
/// The fitness vectors are empty until the population has been evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    members: Vec<Bitstring>,
    fitness_true: Vec<u32>,
    fitness_noisy: Vec<u32>,
}

impl Population {
    pub fn unevaluated(members: Vec<Bitstring>) -> Self {
        Self {
            members,
            fitness_true: Vec::new(),
            fitness_noisy: Vec::new(),
        }
    }

    pub fn with_fitness(
        members: Vec<Bitstring>,
        fitness_true: Vec<u32>,
        fitness_noisy: Vec<u32>,
    ) -> Result<Self> {
        if members.len() != fitness_true.len() || members.len() != fitness_noisy.len() {
            return Err(arg_err(format!(
                "population of {} members with {} true and {} noisy fitness values",
                members.len(),
                fitness_true.len(),
                fitness_noisy.len()
            )));
        }
        Ok(Self {
            members,
            fitness_true,
            fitness_noisy,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_evaluated(&self) -> bool {
        self.fitness_true.len() == self.members.len() && self.fitness_noisy.len() == self.members.len()
    }

    pub fn members(&self) -> &[Bitstring] {
        &self.members
    }

    pub fn fitness_true(&self) -> &[u32] {
        &self.fitness_true
    }

    pub fn fitness_noisy(&self) -> &[u32] {
        &self.fitness_noisy
    }

    pub(crate) fn set_fitness(&mut self, fitness_true: Vec<u32>, fitness_noisy: Vec<u32>) {
        debug_assert_eq!(fitness_true.len(), self.members.len());
        debug_assert_eq!(fitness_noisy.len(), self.members.len());
        self.fitness_true = fitness_true;
        self.fitness_noisy = fitness_noisy;
    }

    pub fn best_true(&self) -> u32 {
        self.fitness_true.iter().copied().max().unwrap_or(0)
    }
}

/// A population ordered by non-increasing noisy fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedPopulation(Population);

impl SortedPopulation {
    /// Stable sort by noisy fitness, descending; ties keep sampling order.
    pub fn sort(pop: Population) -> Result<Self> {
        if !pop.is_evaluated() {
            return Err(arg_err("population must be evaluated before sorting"));
        }
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| pop.fitness_noisy[b].cmp(&pop.fitness_noisy[a]));
        let Population {
            members,
            fitness_true,
            fitness_noisy,
        } = pop;
        let mut slots: Vec<Option<Bitstring>> = members.into_iter().map(Some).collect();
        let members = order.iter().map(|&i| slots[i].take().unwrap()).collect();
        let fitness_true = order.iter().map(|&i| fitness_true[i]).collect();
        let fitness_noisy = order.iter().map(|&i| fitness_noisy[i]).collect();
        Ok(Self(Population {
            members,
            fitness_true,
            fitness_noisy,
        }))
    }

    pub fn population(&self) -> &Population {
        &self.0
    }

    pub fn into_inner(self) -> Population {
        self.0
    }

    /// The first `mu` individuals.
    pub fn select(&self, mu: usize) -> Result<&[Bitstring]> {
        if mu > self.0.len() {
            return Err(arg_err(format!(
                "cannot select {mu} parents from {} individuals",
                self.0.len()
            )));
        }
        Ok(&self.0.members[..mu])
    }
}
