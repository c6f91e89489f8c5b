//! LeadingOnes, its prior-noise variant, and evaluation counting.

use rand::Rng;

use crate::error::{arg_err, Result};
use crate::model::{Bitstring, Population};

/// Length of the maximal all-ones prefix.
pub fn leading_ones(x: &Bitstring) -> u32 {
    let mut run = 0usize;
    for &w in x.words() {
        let t = w.trailing_ones() as usize;
        run += t;
        if t < 64 {
            break;
        }
    }
    run.min(x.len()) as u32
}

/// LeadingOnes of `x` with bit `flip` inverted, without touching `x`.
pub fn leading_ones_with_flip(x: &Bitstring, flip: usize) -> u32 {
    assert!(flip < x.len(), "flip index {flip} out of range");
    let lo = leading_ones(x) as usize;
    let value = match flip.cmp(&lo) {
        std::cmp::Ordering::Less => flip,
        std::cmp::Ordering::Equal => lo + 1 + x.ones_run_from(lo + 1),
        std::cmp::Ordering::Greater => lo,
    };
    value as u32
}

/// Prior bit-flip noise: with probability `p` a uniformly chosen bit is
/// flipped before evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseConfig {
    p: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig { p: 0.0 };

    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(arg_err(format!("noise probability {p} outside [0, 1)")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn is_noiseless(&self) -> bool {
        self.p == 0.0
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::NONE
    }
}

/// One noisy LeadingOnes evaluation.
///
/// With `p > 0` the stream is consumed in a fixed order: the noise coin
/// (`f64`), then, if the coin fires, the flip index (`u64` in `0..n`). With
/// `p == 0` nothing is drawn.
pub fn noisy_leading_ones<R: Rng + ?Sized>(x: &Bitstring, noise: NoiseConfig, rng: &mut R) -> u32 {
    if noise.is_noiseless() {
        return leading_ones(x);
    }
    let coin: f64 = rng.gen();
    if coin < noise.p {
        let i = rng.gen_range(0..x.len() as u64) as usize;
        leading_ones_with_flip(x, i)
    } else {
        leading_ones(x)
    }
}

/// `(1 - p) f(x) + (p / n) * sum_i f(flip_i(x))`, by enumerating the flips.
pub fn expected_noisy_fitness(x: &Bitstring, noise: NoiseConfig) -> f64 {
    let n = x.len();
    let f = leading_ones(x) as f64;
    if noise.is_noiseless() || n == 0 {
        return f;
    }
    let flipped: f64 = (0..n).map(|i| leading_ones_with_flip(x, i) as f64).sum();
    (1.0 - noise.p) * f + noise.p / n as f64 * flipped
}

/// Fitness evaluations attributed to one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvaluationCounter {
    evals: u64,
}

impl EvaluationCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.evals
    }

    pub fn add(&mut self, k: u64) {
        self.evals += k;
    }
}

/// Evaluates whole populations and charges the counter once per individual.
#[derive(Debug, Clone)]
pub struct Evaluator {
    noise: NoiseConfig,
    counter: EvaluationCounter,
}

impl Evaluator {
    pub fn new(noise: NoiseConfig) -> Self {
        Self {
            noise,
            counter: EvaluationCounter::new(),
        }
    }

    pub fn noise(&self) -> NoiseConfig {
        self.noise
    }

    pub fn evals(&self) -> u64 {
        self.counter.get()
    }

    /// Fills both fitness vectors, individual by individual in sampling order.
    pub fn evaluate<R: Rng + ?Sized>(&mut self, pop: &mut Population, rng: &mut R) {
        let mut fitness_true = Vec::with_capacity(pop.len());
        let mut fitness_noisy = Vec::with_capacity(pop.len());
        for x in pop.members() {
            let f = leading_ones(x);
            let noisy = if self.noise.is_noiseless() {
                f
            } else {
                noisy_leading_ones(x, self.noise, rng)
            };
            fitness_true.push(f);
            fitness_noisy.push(noisy);
        }
        pop.set_fitness(fitness_true, fitness_noisy);
        self.counter.add(pop.len() as u64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::seeding::rng_from_seed;
    use proptest::prelude::*;

    fn bs(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    #[test]
    fn leading_ones_examples() {
        assert_eq!(leading_ones(&bs("111010")), 3);
        assert_eq!(leading_ones(&bs("1111111")), 7);
        assert_eq!(leading_ones(&bs("0111")), 0);
        assert_eq!(leading_ones(&Bitstring::ones(200)), 200);
        let mut x = Bitstring::ones(200);
        x.set(150, false);
        assert_eq!(leading_ones(&x), 150);
    }

    #[test]
    fn flip_cases() {
        let x = bs("110110");
        assert_eq!(leading_ones_with_flip(&x, 0), 0);
        assert_eq!(leading_ones_with_flip(&x, 1), 1);
        assert_eq!(leading_ones_with_flip(&x, 2), 5);
        assert_eq!(leading_ones_with_flip(&x, 5), 2);
        assert_eq!(leading_ones_with_flip(&bs("110"), 2), 3);
    }

    #[test]
    fn noise_config_bounds() {
        assert!(NoiseConfig::new(0.0).is_ok());
        assert!(NoiseConfig::new(0.99).is_ok());
        assert!(NoiseConfig::new(1.0).is_err());
        assert!(NoiseConfig::new(-0.1).is_err());
    }

    #[test]
    fn zero_noise_is_noiseless_and_draws_nothing() {
        let mut rng = rng_from_seed(1);
        let mut untouched = rng_from_seed(1);
        for s in ["0", "1011", "111", "000111"] {
            let x = bs(s);
            assert_eq!(noisy_leading_ones(&x, NoiseConfig::NONE, &mut rng), leading_ones(&x));
        }
        assert_eq!(rng.gen::<u64>(), untouched.gen::<u64>());
    }

    #[test]
    fn expected_noisy_fitness_examples() {
        let p03 = NoiseConfig::new(0.3).unwrap();
        assert!((expected_noisy_fitness(&bs("111"), p03) - 2.4).abs() < 1e-12);
        assert_eq!(expected_noisy_fitness(&bs("1101"), NoiseConfig::NONE), 2.0);
        let p01 = NoiseConfig::new(0.1).unwrap();
        assert!((expected_noisy_fitness(&Bitstring::ones(100), p01) - 94.95).abs() < 1e-9);
    }

    #[test]
    fn all_zeros_noisy_support() {
        let p = 0.3;
        let noise = NoiseConfig::new(p).unwrap();
        let x = bs("000");
        let mut rng = rng_from_seed(21);
        let draws = 300_000;
        let mut ones = 0u32;
        for _ in 0..draws {
            let f = noisy_leading_ones(&x, noise, &mut rng);
            assert!(f <= 1);
            ones += f;
        }
        let q = p / 3.0;
        let sigma = (draws as f64 * q * (1.0 - q)).sqrt();
        assert!((ones as f64 - draws as f64 * q).abs() < 4.0 * sigma);
    }

    #[test]
    fn monte_carlo_mean_matches_expectation() {
        let noise = NoiseConfig::new(0.3).unwrap();
        let x = bs("111");
        let mut rng = rng_from_seed(8);
        let draws = 1_000_000u32;
        let values: Vec<f64> = (0..draws)
            .map(|_| noisy_leading_ones(&x, noise, &mut rng) as f64)
            .collect();
        let mean = values.iter().sum::<f64>() / draws as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - 2.4).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn evaluator_counts_lambda_per_population() {
        let members = vec![bs("110"), bs("001"), bs("111")];
        let mut pop = Population::unevaluated(members);
        let mut ev = Evaluator::new(NoiseConfig::NONE);
        let mut rng = rng_from_seed(0);
        ev.evaluate(&mut pop, &mut rng);
        assert_eq!(ev.evals(), 3);
        assert_eq!(pop.fitness_true(), &[2, 0, 3]);
        assert_eq!(pop.fitness_noisy(), pop.fitness_true());
        ev.evaluate(&mut pop, &mut rng);
        assert_eq!(ev.evals(), 6);
    }

    fn arb_bits() -> impl Strategy<Value = Vec<bool>> {
        prop::collection::vec(any::<bool>(), 1..150)
    }

    proptest! {
        #[test]
        fn optimum_iff_all_ones(bits in arb_bits()) {
            let x = Bitstring::from_bits(&bits);
            prop_assert_eq!(leading_ones(&x) as usize == x.len(), bits.iter().all(|&b| b));
        }

        #[test]
        fn matches_naive_definition(bits in arb_bits()) {
            let x = Bitstring::from_bits(&bits);
            let naive = bits.iter().take_while(|&&b| b).count() as u32;
            prop_assert_eq!(leading_ones(&x), naive);
        }

        #[test]
        fn prefix_determined(bits in arb_bits(), tail in arb_bits(), k in 0usize..150) {
            let n = bits.len();
            let k = k % n;
            let mut a = bits.clone();
            a[k] = false;
            let mut b = a.clone();
            for (i, t) in tail.iter().enumerate() {
                let j = k + 1 + i;
                if j < n { b[j] = *t; }
            }
            prop_assert_eq!(
                leading_ones(&Bitstring::from_bits(&a)),
                leading_ones(&Bitstring::from_bits(&b))
            );
        }

        #[test]
        fn flip_matches_copy(bits in arb_bits(), i in 0usize..150) {
            let x = Bitstring::from_bits(&bits);
            let i = i % x.len();
            let mut y = x.clone();
            y.flip(i);
            prop_assert_eq!(leading_ones_with_flip(&x, i), leading_ones(&y));
        }
    }
}
