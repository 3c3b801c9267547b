//! Stationary Markov measures on a subshift and their g-functions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::PathRng;
use crate::shift::{CylinderMeasure, ShiftSystem, Word};

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 1_000_000;
pub const GIBBS_MAX_DEPTH: usize = 16;

fn check_stochastic(p: &[Vec<f64>]) -> Result<usize> {
    let k = p.len();
    if k == 0 {
        return Err(Error::InvalidMeasure("empty matrix".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidMeasure(format!(
                "row {i} has {} entries, expected {k}",
                row.len()
            )));
        }
        if row.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidMeasure(format!("row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("row {i} sums to {sum}, not 1")));
        }
    }
    Ok(k)
}

/// Unique probability vector with `pi P = pi`, by power iteration from the
/// uniform vector.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = check_stochastic(p)?;
    let mut pi = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    for _ in 0..STATIONARY_MAX_ITER {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in p.iter().enumerate() {
            for (j, &pij) in row.iter().enumerate() {
                next[j] += pi[i] * pij;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let residual = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if residual <= 1e-15 {
            return Ok(pi);
        }
    }
    Err(Error::Convergence {
        what: "stationary distribution",
        iterations: STATIONARY_MAX_ITER,
    })
}

/// Stationary Markov measure compatible with a [`ShiftSystem`].
#[derive(Debug, Clone)]
pub struct MarkovMeasure {
    system: ShiftSystem,
    stochastic: Vec<Vec<f64>>,
    stationary: Vec<f64>,
}

impl MarkovMeasure {
    pub fn new(system: ShiftSystem, stochastic: Vec<Vec<f64>>) -> Result<Self> {
        let k = check_stochastic(&stochastic)?;
        if k != system.alphabet_size() {
            return Err(Error::InvalidMeasure(format!(
                "stochastic matrix is {k}x{k} but the alphabet has {} symbols",
                system.alphabet_size()
            )));
        }
        for (i, row) in stochastic.iter().enumerate() {
            for (j, &pij) in row.iter().enumerate() {
                if (pij > 0.0) != system.allowed(i as u8, j as u8) {
                    return Err(Error::InvalidMeasure(format!(
                        "P({i},{j}) = {pij} disagrees with the transition matrix"
                    )));
                }
            }
        }
        let stationary = stationary_distribution(&stochastic)?;
        Ok(Self {
            system,
            stochastic,
            stationary,
        })
    }

    /// Uniform Bernoulli measure on the full shift with `k` symbols.
    pub fn bernoulli_uniform(k: usize) -> Result<Self> {
        let system = ShiftSystem::full(k, 0.5)?;
        Self::new(system, vec![vec![1.0 / k as f64; k]; k])
    }

    pub fn system(&self) -> &ShiftSystem {
        &self.system
    }

    pub fn stochastic(&self) -> &[Vec<f64>] {
        &self.stochastic
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn alphabet_size(&self) -> usize {
        self.system.alphabet_size()
    }

    #[inline]
    pub fn transition_prob(&self, from: u8, to: u8) -> f64 {
        self.stochastic[from as usize][to as usize]
    }

    /// `pi_{w_1} * prod p_{w_i, w_{i+1}}`; zero for inadmissible or
    /// out-of-range words, one for the empty word.
    pub fn cylinder_measure(&self, word: &[u8]) -> f64 {
        let k = self.alphabet_size();
        let Some(&first) = word.first() else { return 1.0 };
        if word.iter().any(|&s| s as usize >= k) {
            return 0.0;
        }
        word.windows(2)
            .fold(self.stationary[first as usize], |acc, w| acc * self.transition_prob(w[0], w[1]))
    }

    /// Weight of prepending `symbol` to a point starting with `suffix`:
    /// `pi_a P_{a,y_1} / pi_{y_1}`, the conditional probability of `x_1 = a`
    /// given `x_2 = y_1`. Zero for inadmissible concatenations.
    pub fn g_function(&self, symbol: u8, suffix: &[u8]) -> Result<f64> {
        let Some(&y1) = suffix.first() else {
            return Err(Error::domain("g-function needs a nonempty suffix"));
        };
        self.system.check_symbols(&[symbol, y1])?;
        Ok(self.g_pair(symbol, y1))
    }

    #[inline]
    pub(crate) fn g_pair(&self, a: u8, y1: u8) -> f64 {
        self.stationary[a as usize] * self.transition_prob(a, y1) / self.stationary[y1 as usize]
    }

    /// Extremes of `mu([A]) / exp(S_n log g(x))` over all admissible words `A`
    /// of length at most `depth_max`, with `x` the extension of `A` by its
    /// smallest admissible next symbol.
    pub fn verify_gibbs(&self, depth_max: usize) -> Result<GibbsBracket> {
        if depth_max > GIBBS_MAX_DEPTH {
            return Err(Error::Resource(format!(
                "Gibbs audit depth {depth_max} exceeds {GIBBS_MAX_DEPTH}"
            )));
        }
        let words: u128 = (0..=depth_max).map(|d| self.system.count_words(d)).sum();
        if words > 1 << 24 {
            return Err(Error::Resource(format!("Gibbs audit would enumerate {words} words")));
        }
        let mut bracket = GibbsBracket {
            k_lower: 1.0,
            k_upper: 1.0,
        };
        let mut layer = vec![Word::empty()];
        for _ in 0..depth_max {
            layer = layer.iter().flat_map(|w| self.system.children(w)).collect();
            for word in &layer {
                let ratio = self.gibbs_ratio(word);
                bracket.k_lower = bracket.k_lower.min(ratio);
                bracket.k_upper = bracket.k_upper.max(ratio);
            }
        }
        Ok(bracket)
    }

    fn gibbs_ratio(&self, word: &Word) -> f64 {
        let last = word.last().expect("nonempty word");
        let next = self
            .system
            .successors(Some(last))
            .next()
            .expect("every symbol has a successor");
        let log_mu: f64 = self.cylinder_measure(word).ln();
        let birkhoff: f64 = word
            .windows(2)
            .map(|w| self.g_pair(w[0], w[1]).ln())
            .sum::<f64>()
            + self.g_pair(last, next).ln();
        (log_mu - birkhoff).exp()
    }

    pub fn sampler(&self, master_seed: u64, path_index: u64) -> TrajectorySampler<'_> {
        TrajectorySampler::new(self, master_seed, path_index)
    }
}

impl CylinderMeasure for MarkovMeasure {
    fn cylinder_measure(&self, word: &[u8]) -> f64 {
        MarkovMeasure::cylinder_measure(self, word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GibbsBracket {
    pub k_lower: f64,
    pub k_upper: f64,
}

/// Inverse-CDF sampling table for one probability row.
#[derive(Debug, Clone)]
struct CumulativeRow {
    thresholds: Vec<f64>,
    symbols: Vec<u8>,
}

impl CumulativeRow {
    fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut thresholds = Vec::new();
        let mut symbols = Vec::new();
        for (s, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                thresholds.push(acc);
                symbols.push(s as u8);
            }
        }
        CumulativeRow { thresholds, symbols }
    }

    #[inline]
    fn pick(&self, u: f64) -> u8 {
        let last = self.symbols.len() - 1;
        let idx = self.thresholds[..last].iter().position(|&t| u < t).unwrap_or(last);
        self.symbols[idx]
    }
}

/// Deterministic symbol stream for one path: the first symbol is drawn from
/// `pi`, each further symbol from the row of `P` of its predecessor.
pub struct TrajectorySampler<'a> {
    measure: &'a MarkovMeasure,
    master_seed: u64,
    path_index: u64,
    rng: PathRng,
    initial: CumulativeRow,
    rows: Vec<CumulativeRow>,
    current: Option<u8>,
}

impl<'a> TrajectorySampler<'a> {
    pub fn new(measure: &'a MarkovMeasure, master_seed: u64, path_index: u64) -> Self {
        TrajectorySampler {
            measure,
            master_seed,
            path_index,
            rng: PathRng::new(master_seed, path_index),
            initial: CumulativeRow::new(measure.stationary()),
            rows: measure.stochastic().iter().map(|r| CumulativeRow::new(r)).collect(),
            current: None,
        }
    }

    pub fn measure(&self) -> &MarkovMeasure {
        self.measure
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    #[inline]
    pub fn next_symbol(&mut self) -> u8 {
        let u = self.rng.uniform();
        let s = match self.current {
            None => self.initial.pick(u),
            Some(prev) => self.rows[prev as usize].pick(u),
        };
        self.current = Some(s);
        s
    }

    /// Collects the next `n` symbols. Streaming consumers should use the
    /// iterator instead.
    pub fn sample_stream(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.next_symbol()).collect()
    }
}

impl Iterator for TrajectorySampler<'_> {
    type Item = u8;

    fn next(&mut self) -> Option<u8> {
        Some(self.next_symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skewed() -> MarkovMeasure {
        let system = ShiftSystem::full(2, 0.5).unwrap();
        MarkovMeasure::new(system, vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap()
    }

    fn golden() -> MarkovMeasure {
        let system = ShiftSystem::new(&[vec![1, 1], vec![1, 0]], 0.5).unwrap();
        MarkovMeasure::new(system, vec![vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0, 0.0]]).unwrap()
    }

    // Solve pi P = pi for a 2x2 chain by hand: pi_1 = p21 / (p12 + p21).
    fn two_state_oracle(p12: f64, p21: f64) -> [f64; 2] {
        let pi1 = p21 / (p12 + p21);
        [pi1, 1.0 - pi1]
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(pi, vec![0.5, 0.5]);

        let pi = skewed().stationary().to_vec();
        let oracle = two_state_oracle(0.1, 0.5);
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-12 && (pi[0] - oracle[0]).abs() < 1e-12);
        assert!((pi[1] - 1.0 / 6.0).abs() < 1e-12);

        let pi = golden().stationary().to_vec();
        let oracle = two_state_oracle(1.0 / 3.0, 1.0);
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[0] - oracle[0]).abs() < 1e-12);
        assert!((pi[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stationary_errors() {
        assert!(matches!(
            stationary_distribution(&[vec![0.5, 0.6], vec![0.5, 0.5]]),
            Err(Error::InvalidMeasure(_))
        ));
        assert!(matches!(
            stationary_distribution(&[vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]),
            Err(Error::Convergence { .. })
        ));
    }

    #[test]
    fn measure_rejects_mismatched_support() {
        let system = ShiftSystem::new(&[vec![1, 1], vec![1, 0]], 0.5).unwrap();
        assert!(MarkovMeasure::new(system, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn cylinder_examples() {
        let b = MarkovMeasure::bernoulli_uniform(2).unwrap();
        assert_eq!(b.cylinder_measure(&[]), 1.0);
        assert_eq!(b.cylinder_measure(&[0]), 0.5);
        assert_eq!(b.cylinder_measure(&[0, 0, 1]), 0.125);
        assert_eq!(golden().cylinder_measure(&[1, 1]), 0.0);
    }

    #[test]
    fn g_function_examples() {
        let b = MarkovMeasure::bernoulli_uniform(2).unwrap();
        assert_eq!(b.g_function(1, &[0, 1]).unwrap(), 0.5);
        let s = skewed();
        assert!((s.g_function(1, &[0]).unwrap() - 0.1).abs() < 1e-12);
        for m in [s, golden()] {
            for y in 0..2u8 {
                let total: f64 = (0..2u8).map(|a| m.g_function(a, &[y]).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
        assert!(b.g_function(0, &[]).is_err());
    }

    #[test]
    fn kolmogorov_consistency_and_shift_invariance() {
        for m in [skewed(), golden(), MarkovMeasure::bernoulli_uniform(3).unwrap()] {
            let sys = m.system().clone();
            for len in 0..=10 {
                for w in sys.admissible_words(len) {
                    let mu = m.cylinder_measure(&w);
                    let ext: f64 = sys.children(&w).iter().map(|c| m.cylinder_measure(c)).sum();
                    assert!((ext - mu).abs() < 1e-14, "extension sum at {w:?}");
                    let pre: f64 = (0..sys.alphabet_size() as u8)
                        .map(|a| {
                            let mut v = vec![a];
                            v.extend_from_slice(&w);
                            m.cylinder_measure(&v)
                        })
                        .sum();
                    assert!((pre - mu).abs() < 1e-14, "prepend sum at {w:?}");
                }
            }
        }
    }

    #[test]
    fn gibbs_examples() {
        let b = MarkovMeasure::bernoulli_uniform(2).unwrap();
        let br = b.verify_gibbs(10).unwrap();
        assert!((br.k_lower - 1.0).abs() < 1e-12 && (br.k_upper - 1.0).abs() < 1e-12);
        assert_eq!(b.verify_gibbs(0).unwrap(), GibbsBracket { k_lower: 1.0, k_upper: 1.0 });

        let br = skewed().verify_gibbs(8).unwrap();
        assert!(br.k_lower > 0.0 && br.k_upper.is_finite() && br.k_lower <= br.k_upper);
        // The ratio telescopes to pi_b / P(last, b) with b = 0 here.
        let pi0 = 5.0 / 6.0;
        assert!((br.k_lower - pi0 / 0.9).abs() < 1e-9);
        assert!((br.k_upper - pi0 / 0.5).abs() < 1e-9);

        assert!(matches!(b.verify_gibbs(17), Err(Error::Resource(_))));
    }

    #[test]
    fn sampler_is_deterministic() {
        let m = skewed();
        let a = m.sampler(9, 0).sample_stream(1000);
        let b = m.sampler(9, 0).sample_stream(1000);
        assert_eq!(a, b);
        assert_ne!(a, m.sampler(9, 1).sample_stream(1000));
    }

    #[test]
    fn sampler_frequencies() {
        let n = 1_000_000;
        let b = MarkovMeasure::bernoulli_uniform(2).unwrap();
        let ones = b.sampler(42, 0).take(n).filter(|&s| s == 0).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);

        let s = skewed();
        let zeros = s.sampler(42, 0).take(n).filter(|&s| s == 0).count();
        assert!((zeros as f64 / n as f64 - s.stationary()[0]).abs() < 0.01);

        let g = golden();
        let path = g.sampler(1, 0).sample_stream(10_000);
        assert!(g.system().is_admissible(&path).unwrap());
    }
}
