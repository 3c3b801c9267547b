//! Deterministic sequence calculus: summable growth functions `psi`, the
//! deviation envelope `c_{eps,psi}`, the correspondence between trimming
//! counts `b_n` and truncation thresholds `f_n`, and explicit norming
//! sequences `d_n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::observable::Observable;

/// A positive function on the integers with summable reciprocals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PsiFunction {
    /// `u(j) = j^(1 + delta)`, `delta > 0`.
    Power { delta: f64 },
    /// `u(j) = exp(c * j^degree)`, `c > 0`, `degree > 0`.
    ExpPoly { c: f64, degree: f64 },
}

impl PsiFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PsiFunction::Power { delta } if delta > 0.0 && delta.is_finite() => Ok(()),
            PsiFunction::ExpPoly { c, degree } if c > 0.0 && degree > 0.0 && c.is_finite() && degree.is_finite() => Ok(()),
            other => Err(Error::domain(format!("{other:?} does not have summable reciprocals"))),
        }
    }

    /// `log psi(j)`.
    pub fn log_at(&self, j: u64) -> f64 {
        match *self {
            PsiFunction::Power { delta } => (1.0 + delta) * (j as f64).ln(),
            PsiFunction::ExpPoly { c, degree } => c * (j as f64).powf(degree),
        }
    }

    pub fn eval(&self, j: u64) -> f64 {
        self.log_at(j).exp()
    }

    /// `log psi(floor(log n))`.
    pub fn log_at_log(&self, n: u64) -> f64 {
        self.log_at((n as f64).ln().floor() as u64)
    }
}

/// `c(k, n) = max{k, log psi(floor log n)}^(1/2+eps) * (log psi(floor log n))^(1/2-eps)`.
pub fn c_eps_psi(k: f64, n: u64, eps: f64, psi: &PsiFunction) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::domain(format!("eps = {eps} must lie in (0, 1/4)")));
    }
    if n < 3 {
        return Err(Error::domain(format!("n = {n} must be at least 3")));
    }
    if !(k >= 1.0) {
        return Err(Error::domain(format!("k = {k} must be at least 1")));
    }
    let l = psi.log_at_log(n);
    Ok(k.max(l).powf(0.5 + eps) * l.powf(0.5 - eps))
}

/// How `b_n` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TrimSchedule {
    /// `b_n = ceil(n^beta)`.
    Power { beta: f64 },
    /// `b_n = ceil(R/(1-q) q^(k_n) n + w_n)` with
    /// `k_n = ceil(log(n^(1-beta) R/(1-q)) / log(1/q))` (at least 1) and
    /// `w_n = (q^(k_n) n)^0.55 (log psi(floor log n))^0.45`.
    StPete { beta: f64, r: f64, q: f64, psi: PsiFunction },
    /// Explicit `(n, b_n)` pairs.
    Explicit(Vec<(u64, u64)>),
}

impl TrimSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrimSchedule::Power { beta } if *beta > 0.0 && *beta < 1.0 => Ok(()),
            TrimSchedule::Power { beta } => Err(Error::domain(format!("beta = {beta} must lie in (0,1)"))),
            TrimSchedule::StPete { beta, r, q, psi } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return Err(Error::domain(format!("beta = {beta} must lie in (0,1)")));
                }
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(Error::domain(format!("q = {q} must lie in (0,1)")));
                }
                if !(*r > 0.0 && *r < 1.0 / q) {
                    return Err(Error::domain(format!("R = {r} must lie in (0, 1/q)")));
                }
                psi.validate()
            }
            TrimSchedule::Explicit(pairs) => {
                if pairs.windows(2).any(|w| w[0].0 >= w[1].0 || w[0].1 > w[1].1) {
                    return Err(Error::domain(
                        "explicit schedule must have increasing n and nondecreasing b_n",
                    ));
                }
                match pairs.iter().find(|(n, b)| *b < 1 || b > n) {
                    Some((n, b)) => Err(Error::domain(format!("b_n = {b} outside [1, {n}]"))),
                    None => Ok(()),
                }
            }
        }
    }

    /// `k_n` of the St. Petersburg schedule.
    pub fn stpete_level(n: u64, beta: f64, r: f64, q: f64) -> u32 {
        let target = (n as f64).powf(1.0 - beta) * r / (1.0 - q);
        let k = (target.ln() / (1.0 / q).ln()).ceil();
        k.max(1.0) as u32
    }

    pub fn trim_at(&self, n: u64) -> Result<u64> {
        let b = match self {
            TrimSchedule::Power { beta } => (n as f64).powf(*beta).ceil() as u64,
            TrimSchedule::StPete { beta, r, q, psi } => {
                let k = Self::stpete_level(n, *beta, *r, *q);
                let base = q.powi(k as i32) * n as f64;
                let w = base.powf(0.55) * psi.log_at_log(n).max(0.0).powf(0.45);
                (r / (1.0 - q) * base + w).ceil() as u64
            }
            TrimSchedule::Explicit(pairs) => pairs
                .iter()
                .find(|(m, _)| *m == n)
                .map(|&(_, b)| b)
                .ok_or_else(|| Error::ScheduleInfeasible {
                    n,
                    reason: "no explicit b_n for this n".into(),
                })?,
        };
        if b < 1 || b > n {
            return Err(Error::ScheduleInfeasible {
                n,
                reason: format!("b_n = {b} outside [1, n]"),
            });
        }
        Ok(b)
    }
}

/// `f_n = F^{<-}(1 - (b_n - V c(b_n, n)) / n)`.
pub fn threshold_from_trim(
    b: u64,
    n: u64,
    v: f64,
    eps: f64,
    psi: &PsiFunction,
    observable: &Observable,
) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::domain(format!("V = {v} must be nonnegative")));
    }
    let shift = if v == 0.0 { 0.0 } else { v * c_eps_psi(b as f64, n, eps, psi)? };
    let mass = b as f64 - shift;
    if !(mass > 0.0 && mass < n as f64) {
        return Err(Error::ScheduleInfeasible {
            n,
            reason: format!("b_n - V c(b_n, n) = {mass} is not in (0, n)"),
        });
    }
    observable.tail_quantile(mass / n as f64)
}

/// Ceiling that ignores relative noise below 1e-12 around an integer.
fn robust_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `b_n = ceil(n mu(chi > f_n) + r_n)`.
pub fn trim_from_threshold(f: f64, n: u64, r: f64, observable: &Observable) -> Result<u64> {
    if !(r >= 0.0) {
        return Err(Error::domain(format!("r_n = {r} must be nonnegative")));
    }
    let b = robust_ceil(n as f64 * observable.tail_prob(f) + r);
    if b > n as f64 {
        return Err(Error::ScheduleInfeasible {
            n,
            reason: format!("b_n = {b} exceeds n"),
        });
    }
    Ok(b as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conjugate {
    pub value: f64,
    /// `|y L(x y) - 1|` at the returned `y`.
    pub residual: f64,
    pub iterations: usize,
}

/// Numeric de Bruijn conjugate: the fixed point of `y = 1 / L(x y)` from `y = 1`.
pub fn debruijn_conjugate(l: &dyn Fn(f64) -> f64, x: f64) -> Result<Conjugate> {
    const MAX_ITER: usize = 200;
    let mut y = 1.0f64;
    for it in 1..=MAX_ITER {
        let next = 1.0 / l(x * y);
        if !(next.is_finite() && next > 0.0) {
            return Err(Error::ConjugateDiverged { x });
        }
        let done = (next / y - 1.0).abs() < 1e-10;
        y = next;
        if done {
            return Ok(Conjugate {
                value: y,
                residual: (y * l(x * y) - 1.0).abs(),
                iterations: it,
            });
        }
    }
    Err(Error::ConjugateDiverged { x })
}

/// `d_n = alpha/(1-alpha) n^(1/alpha) b_n^(1-1/alpha) (L^(1/alpha))^#((n/b_n)^(1/alpha))`.
pub fn d_regvar(n: u64, b: u64, alpha: f64, l: &dyn Fn(f64) -> f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha = {alpha} must lie in (0,1)")));
    }
    if !(b >= 1 && b < n) {
        return Err(Error::domain(format!("need 1 <= b_n < n, got b_n = {b}, n = {n}")));
    }
    let (nf, bf) = (n as f64, b as f64);
    let inv = 1.0 / alpha;
    let l_pow = |x: f64| l(x).powf(inv);
    let conj = debruijn_conjugate(&l_pow, (nf / bf).powf(inv))?;
    let log_d = (alpha / (1.0 - alpha)).ln() + inv * nf.ln() + (1.0 - inv) * bf.ln() + conj.value.ln();
    Ok(log_d.exp())
}

/// `d_n = eta/(q eta - 1) (R q)^(-a) (1-q)^(1+a) n^(-a) b_n^(1+a)` with `a = log eta / log q`.
pub fn d_stpete(n: u64, b: u64, q: f64, eta: f64, r: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("q = {q} must lie in (0,1)")));
    }
    if !(eta * q > 1.0 && eta.is_finite()) {
        return Err(Error::domain(format!("need eta > 1/q, got eta = {eta}, q = {q}")));
    }
    if !(r > 0.0 && r < 1.0 / q) {
        return Err(Error::domain(format!("R = {r} must lie in (0, 1/q)")));
    }
    if !(b >= 1 && b < n) {
        return Err(Error::domain(format!("need 1 <= b_n < n, got b_n = {b}, n = {n}")));
    }
    let a = eta.ln() / q.ln();
    let log_d = (eta / (q * eta - 1.0)).ln() - a * (r * q).ln() + (1.0 + a) * (1.0 - q).ln()
        - a * (n as f64).ln()
        + (1.0 + a) * (b as f64).ln();
    Ok(log_d.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub n: u64,
    pub b_n: u64,
    pub log_psi: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleDiagnostic {
    pub rows: Vec<DiagnosticRow>,
    pub warnings: Vec<String>,
}

/// `b_n / log psi(floor log n)` on a grid, with a warning when the ratio is
/// not strictly increasing or `b_n / n` is not decreasing.
pub fn schedule_diagnostic(
    schedule: &TrimSchedule,
    psi: &PsiFunction,
    n_grid: &[u64],
) -> Result<ScheduleDiagnostic> {
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("n_grid must be strictly increasing"));
    }
    let rows = n_grid
        .iter()
        .map(|&n| {
            let b_n = schedule.trim_at(n)?;
            let log_psi = psi.log_at_log(n);
            Ok(DiagnosticRow {
                n,
                b_n,
                log_psi,
                ratio: b_n as f64 / log_psi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    if let Some(w) = rows.windows(2).find(|w| !(w[1].ratio > w[0].ratio)) {
        warnings.push(format!(
            "b_n / log psi(floor log n) does not increase between n = {} and n = {}",
            w[0].n, w[1].n
        ));
    }
    if let Some(w) = rows
        .windows(2)
        .find(|w| w[1].b_n as f64 / w[1].n as f64 >= w[0].b_n as f64 / w[0].n as f64)
    {
        warnings.push(format!(
            "b_n / n does not decrease between n = {} and n = {}",
            w[0].n, w[1].n
        ));
    }
    Ok(ScheduleDiagnostic { rows, warnings })
}
