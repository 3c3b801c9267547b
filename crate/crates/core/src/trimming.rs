//! Birkhoff sums `S_n`, trimmed sums `S_n^b` (the `b` largest summands
//! removed) and truncated sums `T_n^f` (summands above `f` zeroed).

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub const DEFAULT_B_MAX: usize = 1 << 16;

/// If the trimmed part is smaller than `total / CANCELLATION_LIMIT`, the
/// subtraction `total - top` loses too many digits and the store path is used.
const CANCELLATION_LIMIT: f64 = 1e4;

/// Compensated summation (Neumaier's variant of Kahan's algorithm).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        iter.into_iter().for_each(|x| acc.add(x));
        acc
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<KahanSum>().value()
}

/// Finite nonnegative value with a total order.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Value(f64);

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Streaming state for one path: all values, their compensated sum, and a
/// min-heap holding the `b_max` largest values seen.
#[derive(Debug, Clone)]
pub struct TrimAccumulator {
    total: KahanSum,
    values: Vec<f64>,
    top: BinaryHeap<Reverse<Value>>,
    b_max: usize,
}

impl TrimAccumulator {
    pub fn new(b_max: usize) -> Self {
        Self {
            total: KahanSum::new(),
            values: Vec::new(),
            top: BinaryHeap::with_capacity(b_max.min(1 << 20) + 1),
            b_max,
        }
    }

    pub fn with_capacity(b_max: usize, n: usize) -> Self {
        let mut acc = Self::new(b_max);
        acc.values.reserve_exact(n);
        acc
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn b_max(&self) -> usize {
        self.b_max
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `S_n`.
    pub fn total(&self) -> f64 {
        self.total.value()
    }

    #[inline]
    pub fn push(&mut self, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::domain(format!("pushed value {value} is negative or not finite")));
        }
        self.values.push(value);
        self.total.add(value);
        if self.b_max == 0 {
            return Ok(());
        }
        if self.top.len() < self.b_max {
            self.top.push(Reverse(Value(value)));
        } else if let Some(Reverse(Value(min))) = self.top.peek() {
            if value > *min {
                self.top.pop();
                self.top.push(Reverse(Value(value)));
            }
        }
        Ok(())
    }

    /// The `b` largest values in descending order, when `b <= b_max`.
    pub fn largest(&self, b: usize) -> Option<Vec<f64>> {
        if b > self.top.len() {
            return None;
        }
        let mut top: Vec<f64> = self.top.iter().map(|r| r.0 .0).collect();
        top.sort_unstable_by(|a, b| b.total_cmp(a));
        top.truncate(b);
        Some(top)
    }

    /// `S_n^b`: the sum with the `b` largest values removed.
    pub fn trimmed_sum(&self, b: usize) -> Result<f64> {
        let n = self.count();
        if b > n {
            return Err(Error::domain(format!("cannot trim {b} of {n} values")));
        }
        if b == 0 {
            return Ok(self.total());
        }
        if b == n {
            return Ok(0.0);
        }
        if let Some(top) = self.largest(b) {
            let removed = kahan_sum(top.iter().copied());
            let rest = self.total() - removed;
            if rest * CANCELLATION_LIMIT >= self.total() {
                return Ok(rest.max(0.0));
            }
            return Ok(self.sum_below_rank(b, *top.last().expect("b >= 1")));
        }
        Ok(store_trimmed_sum(&self.values, b))
    }

    /// Sums the values outside the top `b`, given that the `b`-th largest value is `kth`.
    fn sum_below_rank(&self, b: usize, kth: f64) -> f64 {
        let mut acc = KahanSum::new();
        let mut above = 0usize;
        let mut ties = 0usize;
        for &v in &self.values {
            match v.total_cmp(&kth) {
                Ordering::Less => acc.add(v),
                Ordering::Equal => ties += 1,
                Ordering::Greater => above += 1,
            }
        }
        let kept_ties = (above + ties).saturating_sub(b);
        acc.add(kept_ties as f64 * kth);
        acc.value()
    }

    /// `T_n^f`: the sum of values `<= f`.
    pub fn truncated_sum(&self, f: f64) -> f64 {
        kahan_sum(self.values.iter().copied().filter(|&v| v <= f))
    }

    /// `#{values > f}` and `#{values == f}`.
    pub fn exceedance_counts(&self, f: f64) -> (usize, usize) {
        self.values.iter().fold((0, 0), |(above, equal), &v| {
            if v > f {
                (above + 1, equal)
            } else if v == f {
                (above, equal + 1)
            } else {
                (above, equal)
            }
        })
    }

    pub fn max(&self) -> Option<f64> {
        self.top
            .iter()
            .map(|r| r.0 .0)
            .max_by(f64::total_cmp)
            .or_else(|| self.values.iter().copied().max_by(f64::total_cmp))
    }
}

/// Selection on a copy of the store, then a compensated sum of the rest.
fn store_trimmed_sum(values: &[f64], b: usize) -> f64 {
    let mut scratch = values.to_vec();
    let (_, kth, _) = scratch.select_nth_unstable_by(b - 1, |x, y| y.total_cmp(x));
    let kth = *kth;
    let mut acc = KahanSum::new();
    let mut above = 0usize;
    let mut ties = 0usize;
    for &v in values {
        match v.total_cmp(&kth) {
            Ordering::Less => acc.add(v),
            Ordering::Equal => ties += 1,
            Ordering::Greater => above += 1,
        }
    }
    acc.add((above + ties - b) as f64 * kth);
    acc.value()
}

/// Reference semantics for `S_n^b`: sort descending, sum from index `b` on.
pub fn oracle_trimmed(values: &[f64], b: usize) -> Result<f64> {
    if b > values.len() {
        return Err(Error::domain(format!("cannot trim {b} of {} values", values.len())));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(kahan_sum(sorted[b..].iter().copied()))
}
