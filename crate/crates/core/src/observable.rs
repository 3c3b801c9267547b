//! Heavy-tailed observables with exact tail, quantile and truncated-moment
//! calculus, plus streaming evaluators that turn a symbol stream into the
//! sequence `chi, chi∘T, chi∘T², ...`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::measure::MarkovMeasure;

pub const DEFAULT_DEPTH_CAP: usize = 100;
pub const DEFAULT_DIGIT_CAP: usize = 128;
/// Pareto evaluation aborts when the first zero digit lies deeper than this.
pub const PARETO_MAX_LEADING_ONES: usize = 100;

/// `chi(x) = eta^(m-1)` with `m` the 1-based position of the first symbol
/// different from the special symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTimeObservable {
    eta: f64,
    special: u8,
    depth_cap: usize,
    pi_special: f64,
    q: f64,
    powers: Vec<f64>,
}

impl ReturnTimeObservable {
    pub fn new(measure: &MarkovMeasure, eta: f64, special: u8, depth_cap: usize) -> Result<Self> {
        measure.system().check_symbols(&[special])?;
        if depth_cap == 0 {
            return Err(Error::domain("depth_cap must be positive"));
        }
        let q = measure.transition_prob(special, special);
        if !(q > 0.0) {
            return Err(Error::domain(format!(
                "the special symbol must be able to repeat (q = P({special},{special}) = {q})"
            )));
        }
        if !(eta.is_finite() && eta * q > 1.0) {
            return Err(Error::domain(format!(
                "return-time observable requires eta > 1/q (eta = {eta}, q = {q}, 1/q = {})",
                1.0 / q
            )));
        }
        let powers = (0..=depth_cap as i32).map(|k| eta.powi(k)).collect();
        Ok(Self {
            eta,
            special,
            depth_cap,
            pi_special: measure.stationary()[special as usize],
            q,
            powers,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn special(&self) -> u8 {
        self.special
    }

    pub fn depth_cap(&self) -> usize {
        self.depth_cap
    }

    pub fn pi_special(&self) -> f64 {
        self.pi_special
    }

    /// Geometric-law constant with `mu(chi = eta^k) = R q^k` for `k >= 1`,
    /// as obtained from cylinder measures: `pi_1 (1-q) / q`.
    pub fn r_constant(&self) -> f64 {
        self.pi_special * (1.0 - self.q) / self.q
    }

    /// `mu(x_1 = a_1) / q`, the constant as originally stated; kept for comparison.
    pub fn r_constant_stated(&self) -> f64 {
        self.pi_special / self.q
    }

    /// The atom `eta^k`.
    pub fn atom(&self, k: u32) -> f64 {
        self.powers.get(k as usize).copied().unwrap_or_else(|| self.eta.powi(k as i32))
    }

    pub fn eval(&self, prefix: &[u8]) -> Result<f64> {
        match prefix.iter().take(self.depth_cap).position(|&s| s != self.special) {
            Some(i) => Ok(self.powers[i]),
            None if prefix.len() >= self.depth_cap => Err(Error::CapExceeded {
                depth: self.depth_cap,
            }),
            None => Err(Error::InsufficientPrefix { len: prefix.len() }),
        }
    }

    /// `mu(chi = eta^k)`.
    pub fn level_prob(&self, k: u32) -> f64 {
        if k == 0 {
            1.0 - self.pi_special
        } else {
            self.pi_special * self.q.powi(k as i32 - 1) * (1.0 - self.q)
        }
    }

    /// Largest `k` with `eta^k <= level`, `None` below the smallest atom.
    pub fn atom_index_below(&self, level: f64) -> Option<u32> {
        if !(level >= 1.0) {
            return None;
        }
        if level == f64::INFINITY {
            return Some(u32::MAX);
        }
        let mut k = (level.ln() / self.eta.ln()).floor().max(0.0) as u32;
        while k > 0 && self.atom(k) > level {
            k -= 1;
        }
        while self.atom(k + 1) <= level {
            k += 1;
        }
        Some(k)
    }

    /// `mu(chi > level)`.
    pub fn tail_prob(&self, level: f64) -> f64 {
        match self.atom_index_below(level) {
            None => 1.0,
            Some(k) => self.pi_special * self.q.powi(k as i32),
        }
    }

    /// Smallest atom `x` with `mu(chi > x) <= p`, for `p` in `(0, 1)`.
    pub fn tail_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("tail level {p} outside (0,1)")));
        }
        if self.pi_special <= p {
            return Ok(1.0);
        }
        let mut k = ((p / self.pi_special).ln() / self.q.ln()).ceil().max(0.0) as u32;
        while k > 0 && self.pi_special * self.q.powi(k as i32 - 1) <= p {
            k -= 1;
        }
        while self.pi_special * self.q.powi(k as i32) > p {
            k += 1;
        }
        Ok(self.atom(k))
    }

    pub fn expected_truncated(&self, level: f64) -> Result<f64> {
        if level.is_nan() || level < 0.0 {
            return Err(Error::domain(format!("truncation level {level} must be nonnegative")));
        }
        if level == f64::INFINITY {
            return Err(Error::NonIntegrable);
        }
        let Some(top) = self.atom_index_below(level) else { return Ok(0.0) };
        Ok((0..=top).map(|k| self.level_prob(k) * self.atom(k)).sum())
    }
}

/// `chi(x) = (1 - u(x))^(-1/alpha)` on the full 2-shift with the uniform
/// Bernoulli measure, where `u(x) = sum x_j 2^-j`. The tail is exactly `t^-alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoObservable {
    alpha: f64,
    digit_cap: usize,
}

impl ParetoObservable {
    pub fn new(alpha: f64, digit_cap: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha = {alpha} must lie in (0,1)")));
        }
        if !(PARETO_MAX_LEADING_ONES < digit_cap && digit_cap <= 128) {
            return Err(Error::domain(format!(
                "digit_cap = {digit_cap} must lie in ({PARETO_MAX_LEADING_ONES}, 128]"
            )));
        }
        Ok(Self { alpha, digit_cap })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn digit_cap(&self) -> usize {
        self.digit_cap
    }

    /// Value from a window whose most significant `digit_cap` bits are the
    /// complemented digits `1 - x_1, 1 - x_2, ...`.
    #[inline]
    fn value_of_complement(&self, complement: u128) -> Result<f64> {
        let leading_ones = complement.leading_zeros() as usize;
        if leading_ones >= PARETO_MAX_LEADING_ONES {
            return Err(Error::CapExceeded {
                depth: PARETO_MAX_LEADING_ONES,
            });
        }
        // 1 - u(x), truncated after digit_cap digits; exact up to f64 rounding.
        let one_minus_u = complement as f64 * 2f64.powi(-128);
        Ok(one_minus_u.powf(-1.0 / self.alpha))
    }

    fn window_mask(&self) -> u128 {
        u128::MAX << (128 - self.digit_cap)
    }

    pub fn eval(&self, prefix: &[u8]) -> Result<f64> {
        if prefix.iter().any(|&s| s > 1) {
            let bad = prefix.iter().find(|&&s| s > 1).copied().unwrap_or(0);
            return Err(Error::InvalidSymbol {
                symbol: bad as usize,
                alphabet_size: 2,
            });
        }
        let lead = prefix.iter().take_while(|&&s| s == 1).count();
        if lead >= PARETO_MAX_LEADING_ONES {
            return Err(Error::CapExceeded {
                depth: PARETO_MAX_LEADING_ONES,
            });
        }
        if prefix.len() < self.digit_cap {
            return Err(Error::InsufficientPrefix { len: prefix.len() });
        }
        let digits = prefix[..self.digit_cap]
            .iter()
            .fold(0u128, |acc, &s| (acc << 1) | u128::from(s));
        let window = digits << (128 - self.digit_cap);
        self.value_of_complement(!window & self.window_mask())
    }

    pub fn tail_prob(&self, level: f64) -> f64 {
        if level <= 1.0 {
            1.0
        } else {
            level.powf(-self.alpha)
        }
    }

    pub fn tail_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("tail level {p} outside (0,1)")));
        }
        Ok(p.powf(-1.0 / self.alpha))
    }

    /// `E[chi 1{chi <= f}] = alpha/(1-alpha) (f^(1-alpha) - 1)` for `f >= 1`.
    pub fn expected_truncated(&self, level: f64) -> Result<f64> {
        if level.is_nan() || level < 0.0 {
            return Err(Error::domain(format!("truncation level {level} must be nonnegative")));
        }
        if level == f64::INFINITY {
            return Err(Error::NonIntegrable);
        }
        if level < 1.0 {
            return Ok(0.0);
        }
        let a = self.alpha;
        Ok(a / (1.0 - a) * (level.powf(1.0 - a) - 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    ReturnTime(ReturnTimeObservable),
    Pareto(ParetoObservable),
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Observable::ReturnTime(_) => "return_time",
            Observable::Pareto(_) => "pareto",
        }
    }

    pub fn eval(&self, prefix: &[u8]) -> Result<f64> {
        match self {
            Observable::ReturnTime(o) => o.eval(prefix),
            Observable::Pareto(o) => o.eval(prefix),
        }
    }

    pub fn tail_prob(&self, level: f64) -> f64 {
        match self {
            Observable::ReturnTime(o) => o.tail_prob(level),
            Observable::Pareto(o) => o.tail_prob(level),
        }
    }

    /// `mu(chi = level)`; zero for the atomless Pareto observable.
    pub fn point_prob(&self, level: f64) -> f64 {
        match self {
            Observable::ReturnTime(o) => match o.atom_index_below(level) {
                Some(k) if o.atom(k) == level => o.level_prob(k),
                _ => 0.0,
            },
            Observable::Pareto(_) => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail_prob(x)
    }

    /// Generalized inverse `inf{x : F(x) >= u}`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("quantile argument {u} outside (0,1)")));
        }
        self.tail_quantile(1.0 - u)
    }

    /// `F^{<-}(1 - p)` computed directly from the tail, which avoids the
    /// rounding of `1 - p` when `p` is small.
    pub fn tail_quantile(&self, p: f64) -> Result<f64> {
        match self {
            Observable::ReturnTime(o) => o.tail_quantile(p),
            Observable::Pareto(o) => o.tail_quantile(p),
        }
    }

    pub fn expected_truncated(&self, level: f64) -> Result<f64> {
        match self {
            Observable::ReturnTime(o) => o.expected_truncated(level),
            Observable::Pareto(o) => o.expected_truncated(level),
        }
    }

    /// Converts a symbol stream into the stream of observable values.
    pub fn values<I: Iterator<Item = u8>>(&self, symbols: I) -> ValueStream<'_, I> {
        let state = match self {
            Observable::ReturnTime(_) => StreamState::Runs(VecDeque::new()),
            Observable::Pareto(_) => StreamState::Window(None),
        };
        ValueStream {
            observable: self,
            symbols,
            state,
            position: 0,
        }
    }
}

/// `chi · 1{chi <= level}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedObservable {
    pub base: Observable,
    pub level: f64,
}

impl TruncatedObservable {
    pub fn new(base: Observable, level: f64) -> Result<Self> {
        if level.is_nan() || level < 0.0 {
            return Err(Error::domain(format!("truncation level {level} must be nonnegative")));
        }
        Ok(Self { base, level })
    }

    pub fn eval(&self, prefix: &[u8]) -> Result<f64> {
        Ok(truncate(self.base.eval(prefix)?, self.level))
    }
}

#[inline]
pub fn truncate(value: f64, level: f64) -> f64 {
    if value <= level {
        value
    } else {
        0.0
    }
}

enum StreamState {
    /// Values already determined by a completed run of special symbols.
    Runs(VecDeque<f64>),
    /// Sliding window of the next 128 digits, first digit in the top bit.
    Window(Option<u128>),
}

/// Iterator over `chi∘T^i`, reading symbols ahead as far as each value needs.
pub struct ValueStream<'a, I> {
    observable: &'a Observable,
    symbols: I,
    state: StreamState,
    position: u64,
}

impl<I> ValueStream<'_, I> {
    /// Number of values produced so far.
    pub fn position(&self) -> u64 {
        self.position
    }
}

impl<I: Iterator<Item = u8>> ValueStream<'_, I> {
    fn pull(&mut self) -> Result<u8> {
        self.symbols
            .next()
            .ok_or(Error::InsufficientPrefix { len: self.position as usize })
    }

    fn next_value(&mut self) -> Result<f64> {
        match (&mut self.state, self.observable) {
            (StreamState::Runs(ready), Observable::ReturnTime(o)) => {
                if let Some(v) = ready.pop_front() {
                    return Ok(v);
                }
                let mut run = 0usize;
                loop {
                    let s = self.symbols.next().ok_or(Error::InsufficientPrefix {
                        len: self.position as usize + run,
                    })?;
                    if s != o.special {
                        break;
                    }
                    run += 1;
                    if run >= o.depth_cap {
                        return Err(Error::CapExceeded { depth: o.depth_cap });
                    }
                }
                let StreamState::Runs(ready) = &mut self.state else { unreachable!() };
                ready.extend((0..=run).rev().map(|k| o.powers[k]));
                Ok(ready.pop_front().expect("run produces at least one value"))
            }
            (StreamState::Window(window), Observable::Pareto(o)) => {
                let w = match *window {
                    Some(w) => {
                        let s = self.pull()?;
                        (w << 1) | u128::from(s & 1)
                    }
                    None => {
                        let mut w = 0u128;
                        for _ in 0..128 {
                            w = (w << 1) | u128::from(self.pull()? & 1);
                        }
                        w
                    }
                };
                let StreamState::Window(window) = &mut self.state else { unreachable!() };
                *window = Some(w);
                o.value_of_complement(!w & o.window_mask())
            }
            _ => unreachable!("stream state matches observable kind"),
        }
    }
}

impl<I: Iterator<Item = u8>> Iterator for ValueStream<'_, I> {
    type Item = Result<f64>;

    fn next(&mut self) -> Option<Result<f64>> {
        let v = self.next_value();
        if v.is_ok() {
            self.position += 1;
        }
        Some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift::ShiftSystem;

    fn canonical() -> (MarkovMeasure, ReturnTimeObservable) {
        let m = MarkovMeasure::bernoulli_uniform(2).unwrap();
        let o = ReturnTimeObservable::new(&m, 4.0, 0, DEFAULT_DEPTH_CAP).unwrap();
        (m, o)
    }

    fn skewed() -> MarkovMeasure {
        let system = ShiftSystem::full(2, 0.5).unwrap();
        MarkovMeasure::new(system, vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn eval_return_examples() {
        let (_, o) = canonical();
        assert_eq!(o.eval(&[1, 0, 0]).unwrap(), 1.0);
        assert_eq!(o.eval(&[0, 0, 1, 0]).unwrap(), 16.0);
        assert_eq!(o.eval(&[0; 100]), Err(Error::CapExceeded { depth: 100 }));
        assert_eq!(o.eval(&[0; 5]), Err(Error::InsufficientPrefix { len: 5 }));
    }

    #[test]
    fn eta_hypothesis_is_enforced() {
        let m = MarkovMeasure::bernoulli_uniform(2).unwrap();
        let err = ReturnTimeObservable::new(&m, 2.0, 0, 100).unwrap_err();
        assert!(err.to_string().contains("eta > 1/q"));
    }

    #[test]
    fn level_and_tail_examples() {
        let (_, o) = canonical();
        assert_eq!(o.level_prob(1), 0.25);
        assert_eq!(o.level_prob(0), 0.5);
        assert!((o.level_prob(2) / o.level_prob(1) - o.q()).abs() < 1e-15);
        assert_eq!(o.tail_prob(1.0), 0.5);
        assert_eq!(o.tail_prob(0.5), 1.0);
        for k in 0..30 {
            let tele: f64 = (k + 1..200).map(|j| o.level_prob(j)).sum();
            assert!((o.tail_prob(o.atom(k)) - tele).abs() < 1e-14);
            // Geometric law with the derived constant.
            if k >= 1 {
                let r = o.r_constant();
                assert!((o.level_prob(k) - r * o.q().powi(k as i32)).abs() < 1e-15);
            }
        }
    }

    // Brute force over all admissible words of length k+1.
    fn enumerate_level(m: &MarkovMeasure, o: &ReturnTimeObservable, k: u32) -> (f64, f64) {
        let words = m.system().admissible_words(k as usize + 1);
        let mut eq = 0.0;
        let mut gt = 0.0;
        for w in &words {
            let mu = m.cylinder_measure(w);
            match w.iter().position(|&s| s != o.special()) {
                Some(i) if i as u32 == k => eq += mu,
                None => gt += mu,
                _ => {}
            }
        }
        (eq, gt)
    }

    #[test]
    fn exact_against_enumeration() {
        for m in [MarkovMeasure::bernoulli_uniform(2).unwrap(), skewed()] {
            let o = ReturnTimeObservable::new(&m, 4.0, 0, 100).unwrap();
            for k in 0..=12 {
                let (eq, gt) = enumerate_level(&m, &o, k);
                assert!((o.level_prob(k) - eq).abs() < 1e-12);
                assert!((o.tail_prob(o.atom(k)) - gt).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quantile_examples() {
        let (_, o) = canonical();
        let obs = Observable::ReturnTime(o.clone());
        assert_eq!(obs.quantile(0.5).unwrap(), 1.0);
        for k in 0..20 {
            let atom = o.atom(k);
            assert_eq!(obs.quantile(obs.cdf(atom)).unwrap(), atom, "atom {k}");
        }
        assert!(obs.quantile(0.0).is_err() && obs.quantile(1.0).is_err());

        let p = Observable::Pareto(ParetoObservable::new(0.5, 128).unwrap());
        let x = p.quantile(1.0 - 1e-4).unwrap();
        assert!((x / 1e8 - 1.0).abs() < 1e-9);
        assert!((p.tail_quantile(1e-4).unwrap() - 1e8).abs() < 1e-6);
    }

    #[test]
    fn expected_truncated_examples() {
        let (_, o) = canonical();
        assert_eq!(o.expected_truncated(4.0).unwrap(), 1.5);
        assert_eq!(o.expected_truncated(0.5).unwrap(), 0.0);
        assert_eq!(o.expected_truncated(f64::INFINITY), Err(Error::NonIntegrable));
        let (q, eta, r) = (o.q(), o.eta(), o.r_constant());
        let limit = r * q * eta / (q * eta - 1.0);
        let k = 40;
        let ratio = o.expected_truncated(o.atom(k)).unwrap() / (q * eta).powi(k as i32);
        assert!((ratio / limit - 1.0).abs() < 0.01, "ratio {ratio} limit {limit}");
    }

    #[test]
    fn pareto_basics() {
        let p = ParetoObservable::new(0.5, 128).unwrap();
        assert_eq!(p.tail_prob(4.0), 0.5);
        assert_eq!(p.tail_prob(0.3), 1.0);
        // First digit zero: 1 - u is just below 1, so chi is just above 1.
        assert!((p.eval(&[0; 128]).unwrap() - 1.0).abs() < 1e-12);
        // Digits 1,1,0,1,1,...: 1 - u = 1/8, chi = 64.
        let mut digits = vec![1u8; 128];
        digits[2] = 0;
        assert_eq!(p.eval(&digits).unwrap(), 64.0);
        assert_eq!(p.eval(&[1; 128]), Err(Error::CapExceeded { depth: 100 }));
        assert!(matches!(p.eval(&[0; 10]), Err(Error::InsufficientPrefix { .. })));
        let e = p.expected_truncated(100.0).unwrap();
        assert!((e - (10.0 - 1.0)).abs() < 1e-12);
        assert!(ParetoObservable::new(1.0, 128).is_err());
    }

    #[test]
    fn streaming_matches_prefix_evaluation() {
        let (m, o) = canonical();
        let obs = Observable::ReturnTime(o);
        let symbols = m.sampler(3, 0).sample_stream(5000);
        let streamed: Vec<f64> = obs
            .values(symbols.iter().copied())
            .take(4000)
            .map(|v| v.unwrap())
            .collect();
        for (i, v) in streamed.iter().enumerate() {
            assert_eq!(*v, obs.eval(&symbols[i..]).unwrap(), "position {i}");
        }

        let p = Observable::Pareto(ParetoObservable::new(0.5, 128).unwrap());
        let streamed: Vec<f64> = p
            .values(symbols.iter().copied())
            .take(2000)
            .map(|v| v.unwrap())
            .collect();
        for (i, v) in streamed.iter().enumerate() {
            assert_eq!(*v, p.eval(&symbols[i..]).unwrap(), "position {i}");
        }
    }

    #[test]
    fn stream_reports_cap_exceeded() {
        let (_, o) = canonical();
        let obs = Observable::ReturnTime(o);
        let mut vals = obs.values(std::iter::repeat(0u8));
        assert_eq!(vals.next().unwrap(), Err(Error::CapExceeded { depth: 100 }));
    }

    #[test]
    fn truncated_observable() {
        let (_, o) = canonical();
        let t = TruncatedObservable::new(Observable::ReturnTime(o), 4.0).unwrap();
        assert_eq!(t.eval(&[0, 1]).unwrap(), 4.0);
        assert_eq!(t.eval(&[0, 0, 1]).unwrap(), 0.0);
        assert_eq!(t.eval(&[1]).unwrap(), 1.0);
    }

    #[test]
    fn pareto_empirical_tail() {
        let m = MarkovMeasure::bernoulli_uniform(2).unwrap();
        let p = Observable::Pareto(ParetoObservable::new(0.5, 128).unwrap());
        let n = 1_000_000usize;
        let values: Vec<f64> = p.values(m.sampler(42, 0)).take(n).map(|v| v.unwrap()).collect();
        for t in [2.0f64, 10.0, 100.0] {
            let expect = t.powf(-0.5);
            let hits = values.iter().filter(|&&v| v > t).count() as f64 / n as f64;
            // Neighbouring values share 127 digits, so the binomial band is
            // widened by the mean cluster size of exceedances (at most 2).
            let sd = (expect * (1.0 - expect) / n as f64).sqrt() * 2f64.sqrt();
            assert!((hits - expect).abs() < 3.0 * sd, "t = {t}: {hits} vs {expect}");
        }
    }

    proptest::proptest! {
        #[test]
        fn truncation_identity(prefix in proptest::collection::vec(0u8..2, 130), level in 0.0f64..300.0) {
            let (_, o) = canonical();
            let base = Observable::ReturnTime(o);
            let v = base.eval(&prefix).unwrap();
            let t = TruncatedObservable::new(base, level).unwrap();
            proptest::prop_assert_eq!(t.eval(&prefix).unwrap(), if v <= level { v } else { 0.0 });
        }

        #[test]
        fn monotone_moments(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (_, o) = canonical();
            proptest::prop_assert!(o.expected_truncated(lo).unwrap() <= o.expected_truncated(hi).unwrap());
            proptest::prop_assert!(o.tail_prob(lo) >= o.tail_prob(hi));
            let p = ParetoObservable::new(0.3, 128).unwrap();
            proptest::prop_assert!(p.expected_truncated(lo).unwrap() <= p.expected_truncated(hi).unwrap());
            proptest::prop_assert!(p.tail_prob(lo) >= p.tail_prob(hi));
        }
    }
}
