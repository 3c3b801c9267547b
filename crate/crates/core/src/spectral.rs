//! Transfer operators restricted to cylinder functions, their eigendata, and
//! the quasi-Hölder seminorm.
//!
//! At depth `m` the normalized transfer operator of `log g` maps functions
//! constant on `m`-cylinders to functions of the same kind:
//! `(L h)(x_1..x_m) = sum_a g(a, x_1) h(a, x_1..x_{m-1})`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::MarkovMeasure;
use crate::observable::Observable;
use crate::rng::PathRng;
use crate::shift::{ShiftSystem, Word};

pub const MAX_DEPTH: usize = 12;
/// Largest number of cylinders a transfer matrix may be assembled on.
pub const MAX_WORDS: usize = 1 << 20;
/// Largest dimension accepted by [`spectral_gap`].
pub const MAX_GAP_DIMENSION: usize = 4096;

const EIGEN_MAX_ITER: usize = 1_000_000;
const GAP_MAX_ITER: usize = 200_000;

fn check_depth(system: &ShiftSystem, depth: usize) -> Result<()> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::Resource(format!("depth {depth} outside 1..={MAX_DEPTH}")));
    }
    let words = system.count_words(depth);
    if words > MAX_WORDS as u128 {
        return Err(Error::Resource(format!("{words} cylinders at depth {depth} exceed {MAX_WORDS}")));
    }
    Ok(())
}

fn index_of(words: &[Word], symbols: &[u8]) -> Option<usize> {
    words.binary_search_by(|w| w.symbols().cmp(symbols)).ok()
}

/// Indices of the `depth`-words extending `prefix`, which form a contiguous
/// block in lexicographic order.
fn extension_range(words: &[Word], prefix: &[u8]) -> std::ops::Range<usize> {
    let start = words.partition_point(|w| w.symbols() < prefix);
    let len = words[start..].partition_point(|w| w.symbols().starts_with(prefix));
    start..start + len
}

/// A function constant on the cylinders of a fixed depth.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    depth: usize,
    words: Vec<Word>,
    values: Vec<f64>,
}

impl CylinderFunction {
    pub fn from_fn(system: &ShiftSystem, depth: usize, f: impl Fn(&[u8]) -> f64) -> Result<Self> {
        check_depth(system, depth)?;
        let words = system.admissible_words(depth);
        let values = words.iter().map(|w| f(w.symbols())).collect();
        Ok(Self { depth, words, values })
    }

    pub fn constant(system: &ShiftSystem, depth: usize, c: f64) -> Result<Self> {
        Self::from_fn(system, depth, |_| c)
    }

    /// `1_{[word]}`, represented at depth `max(depth, |word|)`.
    pub fn indicator(system: &ShiftSystem, depth: usize, word: &[u8]) -> Result<Self> {
        Self::from_fn(system, depth.max(word.len()), |w| f64::from(u8::from(w.starts_with(word))))
    }

    /// Values listed against the admissible `depth`-words in lexicographic order.
    pub fn from_values(system: &ShiftSystem, depth: usize, values: Vec<f64>) -> Result<Self> {
        check_depth(system, depth)?;
        let words = system.admissible_words(depth);
        if words.len() != values.len() {
            return Err(Error::domain(format!(
                "{} values for {} admissible words of length {depth}",
                values.len(),
                words.len()
            )));
        }
        Ok(Self { depth, words, values })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, word: &[u8]) -> Option<f64> {
        index_of(&self.words, word).map(|i| self.values[i])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The same function on a finer partition.
    pub fn refine(&self, system: &ShiftSystem, depth: usize) -> Result<Self> {
        if depth < self.depth {
            return Err(Error::domain(format!("cannot refine depth {} to {depth}", self.depth)));
        }
        Self::from_fn(system, depth, |w| self.value(&w[..self.depth]).unwrap_or(0.0))
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.words != other.words {
            return Err(Error::domain("cylinder functions live on different partitions"));
        }
        Ok(Self {
            depth: self.depth,
            words: self.words.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `integral h dmu`.
    pub fn integral(&self, measure: &MarkovMeasure) -> f64 {
        self.words
            .iter()
            .zip(&self.values)
            .map(|(w, v)| measure.cylinder_measure(w) * v)
            .sum()
    }
}

/// `max h - min h` over the cylinder `[word]`; zero when `[word]` is empty.
pub fn oscillation(h: &CylinderFunction, word: &[u8]) -> f64 {
    let prefix = &word[..word.len().min(h.depth)];
    let range = extension_range(&h.words, prefix);
    let values = &h.values[range];
    if values.is_empty() {
        return 0.0;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Sparse transfer matrix; row `w` lists `(source, g-weight)` pairs.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    depth: usize,
    words: Vec<Word>,
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn assemble_transfer(measure: &MarkovMeasure, depth: usize) -> Result<TransferMatrix> {
    let system = measure.system();
    check_depth(system, depth)?;
    let words = system.admissible_words(depth);
    let mut source = Vec::with_capacity(depth);
    let rows = words
        .iter()
        .map(|w| {
            let x1 = w[0];
            (0..system.alphabet_size() as u16)
                .map(|a| a as u8)
                .filter(|&a| system.allowed(a, x1))
                .map(|a| {
                    source.clear();
                    source.push(a);
                    source.extend_from_slice(&w[..depth - 1]);
                    let j = index_of(&words, &source).expect("one-symbol extension is admissible");
                    (j, measure.g_pair(a, x1))
                })
                .collect()
        })
        .collect();
    Ok(TransferMatrix { depth, words, rows })
}

impl TransferMatrix {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dimension(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dimension();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for &(j, v) in row {
                    dense[j] += v;
                }
                dense
            })
            .collect()
    }

    /// `T h` for a vector indexed by words.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * h[j]).sum())
            .collect()
    }

    /// `u^T T`.
    pub fn apply_left(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        for (row, &ui) in self.rows.iter().zip(u) {
            for &(j, v) in row {
                out[j] += ui * v;
            }
        }
        out
    }

    pub fn apply_function(&self, h: &CylinderFunction) -> Result<CylinderFunction> {
        if h.words != self.words {
            return Err(Error::domain(format!(
                "function of depth {} on a transfer matrix of depth {}",
                h.depth, self.depth
            )));
        }
        Ok(CylinderFunction {
            depth: self.depth,
            words: self.words.clone(),
            values: self.apply(&h.values),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenpair {
    pub lambda: f64,
    /// Left eigenvector normalized to unit sum; its entries are the masses
    /// of the cylinders under the invariant measure.
    pub eigvec: Vec<f64>,
    pub iterations: usize,
}

/// Leading eigenvalue and left eigenvector by power iteration from uniform.
pub fn leading_eigenpair(t: &TransferMatrix) -> Result<Eigenpair> {
    let n = t.dimension();
    let mut u = vec![1.0 / n as f64; n];
    for it in 1..=EIGEN_MAX_ITER {
        let mut next = t.apply_left(&u);
        let mass: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= mass);
        let delta: f64 = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).sum();
        u = next;
        if delta < 1e-15 {
            // Rayleigh quotient against the right eigenvector 1.
            let lambda = t.apply_left(&u).iter().sum::<f64>() / u.iter().sum::<f64>();
            return Ok(Eigenpair {
                lambda,
                eigvec: u,
                iterations: it,
            });
        }
    }
    Err(Error::Convergence {
        what: "leading eigenvector",
        iterations: EIGEN_MAX_ITER,
    })
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `|lambda_2|`: power iteration on `T - 1 mu^T`, which removes the leading
/// pair and keeps the rest of the spectrum.
pub fn spectral_gap(t: &TransferMatrix) -> Result<f64> {
    let n = t.dimension();
    if n > MAX_GAP_DIMENSION {
        return Err(Error::Resource(format!("dimension {n} exceeds {MAX_GAP_DIMENSION}")));
    }
    let mu = leading_eigenpair(t)?.eigvec;
    let deflate = |x: &mut Vec<f64>| {
        let c: f64 = mu.iter().zip(x.iter()).map(|(m, v)| m * v).sum();
        x.iter_mut().for_each(|v| *v -= c);
    };
    let mut rng = PathRng::new(0x5EED, 0);
    let mut x: Vec<f64> = (0..n).map(|_| rng.uniform() - 0.5).collect();
    deflate(&mut x);
    let x_norm = norm(&x);
    if x_norm == 0.0 {
        return Ok(0.0);
    }
    x.iter_mut().for_each(|v| *v /= x_norm);

    // log ||D^k x|| for k = 0, 1, ...
    let mut logs = vec![0.0f64];
    let mut ratios: Vec<f64> = Vec::new();
    let modulus = loop {
        let mut y = t.apply(&x);
        deflate(&mut y);
        let r = norm(&y);
        if r < 1e-15 {
            break 0.0;
        }
        y.iter_mut().for_each(|v| *v /= r);
        x = y;
        logs.push(logs.last().unwrap() + r.ln());
        ratios.push(r);
        let k = ratios.len();
        // A real dominant eigenvalue settles the one-step ratio.
        if k >= 16 && ratios[k - 8..].iter().all(|&s| (s - r).abs() <= 1e-14 * r) {
            break r;
        }
        if k >= GAP_MAX_ITER {
            // Complex or sign-alternating pairs: geometric mean over the second half.
            let half = k / 2;
            break ((logs[k] - logs[half]) / (k - half) as f64).exp();
        }
    };
    if modulus >= 1.0 - 1e-8 {
        return Err(Error::GapViolation { modulus });
    }
    Ok(modulus)
}

/// `sup_{0 < eps <= eps0} (integral osc(h, B(eps, x)) dmu) / eps`.
///
/// For `eps` in `(mu[w], mu[parent w]]` the ball around every point of `[w]`
/// is `[w]`, so the integral is a step function of `eps` jumping only at
/// cylinder masses, and the supremum is a left limit at one of those masses
/// or the value at `eps0`. Balls deeper than the depth of `h` contribute 0.
pub fn quasi_holder_seminorm(h: &CylinderFunction, eps0: f64, measure: &MarkovMeasure) -> Result<f64> {
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::domain(format!("eps0 = {eps0} must lie in (0,1)")));
    }
    if h.depth > MAX_DEPTH {
        return Err(Error::Resource(format!("depth {} exceeds {MAX_DEPTH}", h.depth)));
    }
    // (position, signed weight): weight enters just above mu[w] and leaves just above mu[parent].
    let mut events: Vec<(f64, f64)> = Vec::new();
    let system = measure.system();
    let mut layer = vec![(Word::empty(), 1.0f64)];
    for _ in 1..h.depth {
        let mut next = Vec::new();
        for (parent, parent_mass) in &layer {
            for w in system.children(parent) {
                let mass = measure.cylinder_measure(&w);
                let osc = oscillation(h, &w);
                if osc > 0.0 && mass < *parent_mass {
                    events.push((mass, mass * osc));
                    events.push((*parent_mass, -mass * osc));
                }
                next.push((w, mass));
            }
        }
        layer = next;
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best = 0.0f64;
    let mut level = 0.0f64;
    let mut at_eps0: Option<f64> = None;
    let mut i = 0;
    while i < events.len() {
        let b = events[i].0;
        if at_eps0.is_none() && b >= eps0 {
            at_eps0 = Some(level);
        }
        while i < events.len() && events[i].0 == b {
            level += events[i].1;
            i += 1;
        }
        if b < eps0 && b > 0.0 {
            best = best.max(level.max(0.0) / b);
        }
    }
    let f_eps0 = at_eps0.unwrap_or(level).max(0.0);
    Ok(best.max(f_eps0 / eps0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropertyFAudit {
    /// `sup_l |l chi|_{eps0} / l` with `l chi = chi 1_{chi <= l}`.
    pub k1_hat: f64,
    /// `sup_l |1_{chi >= l}|_{eps0}`.
    pub k2_hat: f64,
    /// `sup_l |1_{chi = l}|_{eps0}`.
    pub k3_hat: f64,
}

/// Seminorm constants of the truncations of a return-time observable over a
/// grid of levels.
pub fn property_f_audit(
    observable: &Observable,
    measure: &MarkovMeasure,
    eps0: f64,
    level_grid: &[f64],
) -> Result<PropertyFAudit> {
    let Observable::ReturnTime(chi) = observable else {
        return Err(Error::UnsupportedObservable(format!(
            "{} truncations are not constant on cylinders of any finite depth",
            observable.name()
        )));
    };
    if chi.q() != measure.transition_prob(chi.special(), chi.special()) {
        return Err(Error::domain("observable was built for a different measure"));
    }
    let system = measure.system();
    let special = chi.special();
    // Number of leading special symbols, saturating at the word length.
    let run = |w: &[u8]| w.iter().position(|&s| s != special).unwrap_or(w.len());

    let mut audit = PropertyFAudit {
        k1_hat: 0.0,
        k2_hat: 0.0,
        k3_hat: 0.0,
    };
    for &level in level_grid {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::domain(format!("level {level} must be positive and finite")));
        }
        // chi >= level  <=>  chi >= eta^j for the smallest atom eta^j >= level.
        let ceil_index = match chi.atom_index_below(level) {
            None => 0,
            Some(k) if chi.atom(k) == level => k,
            Some(k) => k + 1,
        } as usize;
        let depth_at_least = ceil_index.max(1);
        let at_least = CylinderFunction::from_fn(system, depth_at_least, |w| {
            f64::from(u8::from(run(w) >= ceil_index))
        })?;
        audit.k2_hat = audit.k2_hat.max(quasi_holder_seminorm(&at_least, eps0, measure)?);

        let Some(floor_index) = chi.atom_index_below(level) else {
            // Below the smallest atom: l chi and 1_{chi = l} vanish.
            continue;
        };
        let floor_index = floor_index as usize;
        let depth = floor_index + 1;
        let truncated = CylinderFunction::from_fn(system, depth, |w| {
            let r = run(w);
            if r < w.len() && r <= floor_index {
                chi.atom(r as u32)
            } else {
                0.0
            }
        })?;
        audit.k1_hat = audit.k1_hat.max(quasi_holder_seminorm(&truncated, eps0, measure)? / level);

        if chi.atom(floor_index as u32) == level {
            let equal = CylinderFunction::from_fn(system, depth, |w| f64::from(u8::from(run(w) == floor_index && floor_index < w.len())))?;
            audit.k3_hat = audit.k3_hat.max(quasi_holder_seminorm(&equal, eps0, measure)?);
        }
    }
    Ok(audit)
}
