//! One-sided subshifts of finite type over an alphabet of at most 256 symbols.
//!
//! Symbols are `u8` indices `0..alphabet_size`. A point of the shift space is
//! represented by a finite prefix; everything that depends on infinitely many
//! coordinates reports [`Error::InsufficientPrefix`] when the prefix runs out.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub const MAX_ALPHABET: usize = 256;

/// Structural facts about a 0/1 transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionReport {
    pub irreducible: bool,
    /// Period of the communicating class of symbol 0. Zero when symbol 0
    /// lies on no cycle (only possible for reducible matrices).
    pub period: u32,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn bfs_levels(k: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<Option<u64>> {
    let mut level = vec![None; k];
    let mut queue = VecDeque::from([0usize]);
    level[0] = Some(0);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap();
        for (v, lv) in level.iter_mut().enumerate() {
            if lv.is_none() && edge(u, v) {
                *lv = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

/// Checks shape and entries, then computes irreducibility and the period.
///
/// Irreducibility is forward and backward reachability from symbol 0. The
/// period is the gcd of `level(u) + 1 - level(v)` over edges inside the
/// class of symbol 0, where `level` is BFS distance from symbol 0.
pub fn validate_transition(matrix: &[Vec<i64>]) -> Result<TransitionReport> {
    let k = matrix.len();
    if k == 0 {
        return Err(Error::InvalidMatrix("empty matrix".into()));
    }
    if k > MAX_ALPHABET {
        return Err(Error::InvalidMatrix(format!(
            "alphabet size {k} exceeds {MAX_ALPHABET}"
        )));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidMatrix(format!(
                "row {i} has {} entries, expected {k}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|&v| v != 0 && v != 1) {
            return Err(Error::InvalidMatrix(format!(
                "entry ({i},{j}) = {} is not 0 or 1",
                row[j]
            )));
        }
    }
    let edge = |u: usize, v: usize| matrix[u][v] == 1;
    let forward = bfs_levels(k, edge);
    let backward = bfs_levels(k, |u, v| edge(v, u));
    let connected = forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some);

    let mut period = 0u64;
    for u in 0..k {
        for v in 0..k {
            if !edge(u, v) {
                continue;
            }
            let (Some(lu), Some(lv)) = (forward[u], forward[v]) else { continue };
            if backward[u].is_none() || backward[v].is_none() {
                continue;
            }
            period = gcd(period, (lu + 1).abs_diff(lv));
        }
    }
    // A single symbol with no self-loop is connected but carries no cycle.
    Ok(TransitionReport {
        irreducible: connected && period > 0,
        period: period as u32,
    })
}

/// Alphabet, 0/1 transition matrix and the base `theta` of the metric `d1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSystem {
    alphabet_size: usize,
    transition: Vec<bool>,
    theta: f64,
}

impl ShiftSystem {
    /// Builds a system, rejecting anything that is not irreducible and aperiodic.
    pub fn new(matrix: &[Vec<i64>], theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::domain(format!("theta = {theta} must lie in (0,1)")));
        }
        let report = validate_transition(matrix)?;
        let k = matrix.len();
        for i in 0..k {
            if matrix[i].iter().all(|&v| v == 0) {
                return Err(Error::Rejected(format!("symbol {i} has no successor")));
            }
            if matrix.iter().all(|row| row[i] == 0) {
                return Err(Error::Rejected(format!("symbol {i} has no predecessor")));
            }
        }
        if !report.irreducible {
            return Err(Error::Rejected(
                "matrix is reducible: some symbol cannot reach every other symbol".into(),
            ));
        }
        if report.period != 1 {
            return Err(Error::Rejected(format!(
                "matrix is periodic with period {}",
                report.period
            )));
        }
        let transition = matrix.iter().flatten().map(|&v| v == 1).collect();
        Ok(Self {
            alphabet_size: k,
            transition,
            theta,
        })
    }

    /// Builds a system from a row-major list of `k*k` entries.
    pub fn from_row_major(alphabet_size: usize, entries: &[i64], theta: f64) -> Result<Self> {
        if alphabet_size == 0 || entries.len() != alphabet_size * alphabet_size {
            return Err(Error::InvalidMatrix(format!(
                "{} entries cannot form a {alphabet_size}x{alphabet_size} matrix",
                entries.len()
            )));
        }
        let rows: Vec<Vec<i64>> = entries.chunks(alphabet_size).map(<[i64]>::to_vec).collect();
        Self::new(&rows, theta)
    }

    /// Full shift on `k` symbols.
    pub fn full(k: usize, theta: f64) -> Result<Self> {
        Self::new(&vec![vec![1; k]; k], theta)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn allowed(&self, from: u8, to: u8) -> bool {
        self.transition[from as usize * self.alphabet_size + to as usize]
    }

    pub fn matrix(&self) -> Vec<Vec<i64>> {
        self.transition
            .chunks(self.alphabet_size)
            .map(|row| row.iter().map(|&b| i64::from(b)).collect())
            .collect()
    }

    pub fn check_symbols(&self, symbols: &[u8]) -> Result<()> {
        match symbols.iter().find(|&&s| s as usize >= self.alphabet_size) {
            Some(&s) => Err(Error::InvalidSymbol {
                symbol: s as usize,
                alphabet_size: self.alphabet_size,
            }),
            None => Ok(()),
        }
    }

    /// True iff every adjacent pair is allowed. Empty and one-symbol words are admissible.
    pub fn is_admissible(&self, symbols: &[u8]) -> Result<bool> {
        self.check_symbols(symbols)?;
        Ok(symbols.windows(2).all(|w| self.allowed(w[0], w[1])))
    }

    /// Symbols that may follow `last` (all symbols when `last` is `None`).
    pub fn successors(&self, last: Option<u8>) -> impl Iterator<Item = u8> + '_ {
        (0..self.alphabet_size as u16)
            .map(|s| s as u8)
            .filter(move |&s| last.is_none_or(|l| self.allowed(l, s)))
    }

    /// Admissible one-symbol extensions of `word`, in symbol order.
    pub fn children(&self, word: &Word) -> Vec<Word> {
        self.successors(word.last())
            .map(|s| {
                let mut symbols = word.0.clone();
                symbols.push(s);
                Word(symbols)
            })
            .collect()
    }

    /// All admissible words of length `len` in lexicographic order.
    pub fn admissible_words(&self, len: usize) -> Vec<Word> {
        let mut layer = vec![Word::empty()];
        for _ in 0..len {
            layer = layer.iter().flat_map(|w| self.children(w)).collect();
        }
        layer
    }

    /// Number of admissible words of length `len`, without materializing them.
    pub fn count_words(&self, len: usize) -> u128 {
        if len == 0 {
            return 1;
        }
        let k = self.alphabet_size;
        let mut counts = vec![1u128; k];
        for _ in 1..len {
            let mut next = vec![0u128; k];
            for (from, &c) in counts.iter().enumerate() {
                for (to, slot) in next.iter_mut().enumerate() {
                    if self.transition[from * k + to] {
                        *slot = slot.saturating_add(c);
                    }
                }
            }
            counts = next;
        }
        counts.into_iter().fold(0u128, u128::saturating_add)
    }
}

/// An admissible finite word. The empty word stands for the whole space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn new(system: &ShiftSystem, symbols: Vec<u8>) -> Result<Self> {
        if system.is_admissible(&symbols)? {
            Ok(Word(symbols))
        } else {
            Err(Error::domain(format!("word {symbols:?} is not admissible")))
        }
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<u8> {
        self.0.last().copied()
    }

    pub fn into_symbols(self) -> Vec<u8> {
        self.0
    }
}

impl std::ops::Deref for Word {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

/// Anything that assigns a mass to cylinder sets.
pub trait CylinderMeasure {
    fn cylinder_measure(&self, word: &[u8]) -> f64;
}

/// `theta^k` with `k` the length of the common prefix of `x` and `y`.
pub fn d1_distance(x: &[u8], y: &[u8], theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::domain(format!("theta = {theta} must lie in (0,1)")));
    }
    let common = x.iter().zip(y).take_while(|(a, b)| a == b).count();
    if common == x.len().min(y.len()) {
        return Err(Error::InsufficientPrefix { len: common });
    }
    Ok(theta.powi(common as i32))
}

/// Smallest `k` with `mu([x_1..x_k]) < epsilon`.
///
/// Balls are open, so that cylinder is exactly `B(epsilon, x)` for the
/// cylinder metric `d2`. Depth 0 (the whole space) is returned when `epsilon > 1`.
pub fn d2_ball_depth<M: CylinderMeasure + ?Sized>(
    x_prefix: &[u8],
    epsilon: f64,
    measure: &M,
) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("epsilon = {epsilon} must be positive")));
    }
    (0..=x_prefix.len())
        .find(|&k| measure.cylinder_measure(&x_prefix[..k]) < epsilon)
        .ok_or(Error::InsufficientPrefix {
            len: x_prefix.len(),
        })
}
