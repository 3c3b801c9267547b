//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, unknown and repeated keys are
//! errors. Every problem found is reported, not just the first one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::MarkovMeasure;
use crate::norming::{PsiFunction, TrimSchedule};
use crate::observable::{Observable, ParetoObservable, ReturnTimeObservable};
use crate::shift::ShiftSystem;

pub const MAX_CHECKPOINT: u64 = 100_000_000;
pub const MAX_PATHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Trim,
    Truncate,
    Exceedance,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Trim => "trim",
            Mode::Truncate => "truncate",
            Mode::Exceedance => "exceedance",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trim" => Ok(Mode::Trim),
            "truncate" => Ok(Mode::Truncate),
            "exceedance" => Ok(Mode::Exceedance),
            _ => Err(format!("expected trim, truncate or exceedance, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ObservableSpec {
    ReturnTime { eta: f64, special: u8, depth_cap: usize },
    Pareto { alpha: f64, digit_cap: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ScheduleSpec {
    Power { beta: f64 },
    StPete { beta: f64 },
    Explicit(Vec<(u64, u64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub alphabet_size: usize,
    /// Row-major 0/1 transition matrix.
    pub transition: Vec<i64>,
    /// Row-major stochastic matrix; uniform over allowed successors when absent.
    pub stochastic: Option<Vec<f64>>,
    pub theta: f64,
    pub observable: ObservableSpec,
    pub schedule: ScheduleSpec,
    /// Explicit `(n, f_n)` thresholds overriding the ones derived from `b_n`.
    pub thresholds: Option<Vec<(u64, f64)>>,
    pub psi: PsiFunction,
    pub eps: f64,
    pub v: f64,
    pub v_hat: f64,
    pub checkpoints: Vec<u64>,
    pub paths: usize,
    pub seed: u64,
    pub eps0: f64,
    pub audit_levels: u32,
    pub k1_max: f64,
    pub k2_max: f64,
    pub k3_max: f64,
    pub gibbs_depth: usize,
    pub depth: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Trim,
            alphabet_size: 2,
            transition: vec![1; 4],
            stochastic: None,
            theta: 0.5,
            observable: ObservableSpec::ReturnTime {
                eta: 4.0,
                special: 0,
                depth_cap: 100,
            },
            schedule: ScheduleSpec::StPete { beta: 0.6 },
            thresholds: None,
            psi: PsiFunction::Power { delta: 1.0 },
            eps: 0.1,
            v: 0.0,
            v_hat: 3.0,
            checkpoints: vec![1_000, 10_000, 100_000, 1_000_000, 10_000_000],
            paths: 100,
            seed: 42,
            eps0: 0.9,
            audit_levels: 10,
            k1_max: 1.0 + 1e-9,
            k2_max: 1.0 + 1e-9,
            k3_max: 2.0 + 1e-9,
            gibbs_depth: 12,
            depth: 1,
        }
    }
}

const KEYS: &[&str] = &[
    "mode",
    "alphabet_size",
    "transition",
    "stochastic",
    "theta",
    "observable",
    "eta",
    "special",
    "depth_cap",
    "alpha",
    "digit_cap",
    "schedule",
    "beta",
    "schedule_pairs",
    "thresholds",
    "psi",
    "eps",
    "v",
    "v_hat",
    "checkpoints",
    "paths",
    "seed",
    "eps0",
    "audit_levels",
    "k1_max",
    "k2_max",
    "k3_max",
    "gibbs_depth",
    "depth",
];

fn list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|item| {
            let item = item.trim();
            item.parse().map_err(|_| format!("cannot parse list item `{item}`"))
        })
        .collect()
}

fn pairs<A: FromStr, B: FromStr>(s: &str) -> std::result::Result<Vec<(A, B)>, String> {
    s.split(',')
        .map(|item| {
            let item = item.trim();
            let (a, b) = item.split_once(':').ok_or_else(|| format!("expected `n:value`, got `{item}`"))?;
            let a = a.trim().parse().map_err(|_| format!("cannot parse `{a}` in `{item}`"))?;
            let b = b.trim().parse().map_err(|_| format!("cannot parse `{b}` in `{item}`"))?;
            Ok((a, b))
        })
        .collect()
}

fn parse_psi(s: &str) -> std::result::Result<PsiFunction, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("cannot parse `{t}` as a number"));
    match parts.as_slice() {
        ["power", delta] => Ok(PsiFunction::Power { delta: num(delta)? }),
        ["exp_poly", c, degree] => Ok(PsiFunction::ExpPoly {
            c: num(c)?,
            degree: num(degree)?,
        }),
        _ => Err(format!("expected `power:<delta>` or `exp_poly:<c>:<degree>`, got `{s}`")),
    }
}

fn psi_text(psi: &PsiFunction) -> String {
    match psi {
        PsiFunction::Power { delta } => format!("power:{delta}"),
        PsiFunction::ExpPoly { c, degree } => format!("exp_poly:{c}:{degree}"),
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn join_pairs<A: std::fmt::Display, B: std::fmt::Display>(items: &[(A, B)]) -> String {
    items.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(",")
}

struct Fields<'a> {
    map: BTreeMap<&'a str, &'a str>,
    errors: Vec<String>,
}

impl Fields<'_> {
    fn get<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> std::result::Result<T, String>) -> Option<T> {
        let raw = *self.map.get(key)?;
        match parse(raw) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                None
            }
        }
    }

    fn scalar<T: FromStr>(&mut self, key: &str, slot: &mut T) {
        if let Some(v) = self.get(key, |s| s.parse::<T>().map_err(|_| format!("cannot parse `{s}`"))) {
            *slot = v;
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = Fields {
            map: BTreeMap::new(),
            errors: Vec::new(),
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                fields.errors.push(format!("line {}: expected `key = value`", lineno + 1));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                fields.errors.push(format!("{key}: unknown key"));
            } else if fields.map.insert(key, value).is_some() {
                fields.errors.push(format!("{key}: repeated key"));
            }
        }

        let mut c = ExperimentConfig::default();
        fields.scalar("mode", &mut c.mode);
        fields.scalar("alphabet_size", &mut c.alphabet_size);
        c.transition = vec![1; c.alphabet_size.saturating_mul(c.alphabet_size).min(1 << 16)];
        if let Some(t) = fields.get("transition", list::<i64>) {
            c.transition = t;
        }
        c.stochastic = fields.get("stochastic", list::<f64>);
        fields.scalar("theta", &mut c.theta);

        let kind = fields.get("observable", |s| match s {
            "return_time" | "pareto" => Ok(s.to_string()),
            _ => Err(format!("expected return_time or pareto, got `{s}`")),
        });
        let (mut eta, mut special, mut depth_cap) = (4.0, 0u8, 100usize);
        let (mut alpha, mut digit_cap) = (0.5, 128usize);
        fields.scalar("eta", &mut eta);
        fields.scalar("special", &mut special);
        fields.scalar("depth_cap", &mut depth_cap);
        fields.scalar("alpha", &mut alpha);
        fields.scalar("digit_cap", &mut digit_cap);
        c.observable = match kind.as_deref() {
            Some("pareto") => ObservableSpec::Pareto { alpha, digit_cap },
            _ => ObservableSpec::ReturnTime { eta, special, depth_cap },
        };

        let kind = fields.get("schedule", |s| match s {
            "power" | "stpete" | "explicit" => Ok(s.to_string()),
            _ => Err(format!("expected power, stpete or explicit, got `{s}`")),
        });
        let mut beta = 0.6;
        fields.scalar("beta", &mut beta);
        let explicit = fields.get("schedule_pairs", pairs::<u64, u64>);
        c.schedule = match kind.as_deref() {
            Some("power") => ScheduleSpec::Power { beta },
            Some("explicit") => match explicit {
                Some(p) => ScheduleSpec::Explicit(p),
                None => {
                    if !fields.map.contains_key("schedule_pairs") {
                        fields.errors.push("schedule_pairs: required by schedule = explicit".into());
                    }
                    ScheduleSpec::Explicit(Vec::new())
                }
            },
            _ => ScheduleSpec::StPete { beta },
        };
        c.thresholds = fields.get("thresholds", pairs::<u64, f64>);
        if let Some(psi) = fields.get("psi", parse_psi) {
            c.psi = psi;
        }
        fields.scalar("eps", &mut c.eps);
        fields.scalar("v", &mut c.v);
        fields.scalar("v_hat", &mut c.v_hat);
        if let Some(cp) = fields.get("checkpoints", list::<u64>) {
            c.checkpoints = cp;
        }
        fields.scalar("paths", &mut c.paths);
        fields.scalar("seed", &mut c.seed);
        fields.scalar("eps0", &mut c.eps0);
        fields.scalar("audit_levels", &mut c.audit_levels);
        fields.scalar("k1_max", &mut c.k1_max);
        fields.scalar("k2_max", &mut c.k2_max);
        fields.scalar("k3_max", &mut c.k3_max);
        fields.scalar("gibbs_depth", &mut c.gibbs_depth);
        fields.scalar("depth", &mut c.depth);

        let mut errors = fields.errors;
        if errors.is_empty() {
            errors.extend(c.problems());
        }
        if errors.is_empty() {
            Ok(c)
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Every validation problem, each prefixed with the responsible key.
    pub fn problems(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errors.push(msg);
            }
        };
        let k = self.alphabet_size;
        check(
            (1..=crate::shift::MAX_ALPHABET).contains(&k),
            format!("alphabet_size: {k} outside 1..=256"),
        );
        check(
            self.transition.len() == k * k,
            format!("transition: {} entries for a {k}x{k} matrix", self.transition.len()),
        );
        if let Some(p) = &self.stochastic {
            check(p.len() == k * k, format!("stochastic: {} entries for a {k}x{k} matrix", p.len()));
        }
        check(
            !self.checkpoints.is_empty()
                && self.checkpoints.windows(2).all(|w| w[0] < w[1])
                && self.checkpoints[0] >= 1
                && *self.checkpoints.last().unwrap() <= MAX_CHECKPOINT,
            format!("checkpoints: must be strictly increasing within 1..={MAX_CHECKPOINT}"),
        );
        check(
            (1..=MAX_PATHS).contains(&self.paths),
            format!("paths: {} outside 1..={MAX_PATHS}", self.paths),
        );
        check(
            self.eps > 0.0 && self.eps < 0.25,
            format!("eps: {} outside (0, 1/4)", self.eps),
        );
        check(self.v >= 0.0, format!("v: {} must be nonnegative", self.v));
        check(self.v_hat >= 0.0, format!("v_hat: {} must be nonnegative", self.v_hat));
        check(
            self.eps0 > 0.0 && self.eps0 < 1.0,
            format!("eps0: {} outside (0,1)", self.eps0),
        );
        if let Err(e) = self.psi.validate() {
            errors.push(format!("psi: {e}"));
        }
        if let Some(t) = &self.thresholds {
            if let Some(n) = self.checkpoints.iter().find(|n| !t.iter().any(|(m, _)| m == *n)) {
                errors.push(format!("thresholds: no threshold for checkpoint {n}"));
            }
        }
        if !errors.is_empty() {
            return errors;
        }
        match self.measure() {
            Err(e) => errors.push(format!("transition/stochastic: {e}")),
            Ok(m) => match self.build_observable(&m) {
                Err(e) => errors.push(format!("observable: {e}")),
                Ok(o) => {
                    if let Err(e) = self.trim_schedule(&o).and_then(|s| s.validate()) {
                        errors.push(format!("schedule: {e}"));
                    }
                }
            },
        }
        errors
    }

    pub fn measure(&self) -> Result<MarkovMeasure> {
        let k = self.alphabet_size;
        let system = ShiftSystem::from_row_major(k, &self.transition, self.theta)?;
        let rows: Vec<Vec<f64>> = match &self.stochastic {
            Some(p) => p.chunks(k).map(<[f64]>::to_vec).collect(),
            None => self
                .transition
                .chunks(k)
                .map(|row| {
                    let allowed = row.iter().filter(|&&a| a == 1).count() as f64;
                    row.iter().map(|&a| if a == 1 { 1.0 / allowed } else { 0.0 }).collect()
                })
                .collect(),
        };
        MarkovMeasure::new(system, rows)
    }

    pub fn build_observable(&self, measure: &MarkovMeasure) -> Result<Observable> {
        match self.observable {
            ObservableSpec::ReturnTime { eta, special, depth_cap } => Ok(Observable::ReturnTime(
                ReturnTimeObservable::new(measure, eta, special, depth_cap)?,
            )),
            ObservableSpec::Pareto { alpha, digit_cap } => {
                let fair = measure.alphabet_size() == 2
                    && measure.stochastic().iter().flatten().all(|&p| p == 0.5);
                if !fair {
                    return Err(Error::domain(
                        "the Pareto observable needs the full 2-shift with the uniform Bernoulli measure",
                    ));
                }
                Ok(Observable::Pareto(ParetoObservable::new(alpha, digit_cap)?))
            }
        }
    }

    pub fn trim_schedule(&self, observable: &Observable) -> Result<TrimSchedule> {
        match (&self.schedule, observable) {
            (ScheduleSpec::Power { beta }, _) => Ok(TrimSchedule::Power { beta: *beta }),
            (ScheduleSpec::StPete { beta }, Observable::ReturnTime(o)) => Ok(TrimSchedule::StPete {
                beta: *beta,
                r: o.r_constant(),
                q: o.q(),
                psi: self.psi,
            }),
            (ScheduleSpec::StPete { .. }, _) => Err(Error::domain(
                "the stpete schedule needs the return-time observable",
            )),
            (ScheduleSpec::Explicit(p), _) => Ok(TrimSchedule::Explicit(p.clone())),
        }
    }

    /// Canonical text form; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("mode", self.mode.as_str().into());
        line("alphabet_size", self.alphabet_size.to_string());
        line("transition", join(&self.transition));
        if let Some(p) = &self.stochastic {
            line("stochastic", join(p));
        }
        line("theta", self.theta.to_string());
        match self.observable {
            ObservableSpec::ReturnTime { eta, special, depth_cap } => {
                line("observable", "return_time".into());
                line("eta", eta.to_string());
                line("special", special.to_string());
                line("depth_cap", depth_cap.to_string());
            }
            ObservableSpec::Pareto { alpha, digit_cap } => {
                line("observable", "pareto".into());
                line("alpha", alpha.to_string());
                line("digit_cap", digit_cap.to_string());
            }
        }
        match &self.schedule {
            ScheduleSpec::Power { beta } => {
                line("schedule", "power".into());
                line("beta", beta.to_string());
            }
            ScheduleSpec::StPete { beta } => {
                line("schedule", "stpete".into());
                line("beta", beta.to_string());
            }
            ScheduleSpec::Explicit(p) => {
                line("schedule", "explicit".into());
                line("schedule_pairs", join_pairs(p));
            }
        }
        if let Some(t) = &self.thresholds {
            line("thresholds", join_pairs(t));
        }
        line("psi", psi_text(&self.psi));
        line("eps", self.eps.to_string());
        line("v", self.v.to_string());
        line("v_hat", self.v_hat.to_string());
        line("checkpoints", join(&self.checkpoints));
        line("paths", self.paths.to_string());
        line("seed", self.seed.to_string());
        line("eps0", self.eps0.to_string());
        line("audit_levels", self.audit_levels.to_string());
        line("k1_max", self.k1_max.to_string());
        line("k2_max", self.k2_max.to_string());
        line("k3_max", self.k3_max.to_string());
        line("gibbs_depth", self.gibbs_depth.to_string());
        line("depth", self.depth.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "\
            # canonical St. Petersburg setup\n\
            mode = truncate\n\
            transition = 1,1,1,1\n\
            stochastic = 0.5,0.5,0.5,0.5\n\
            eta = 4   # > 1/q\n\
            schedule = power\n\
            beta = 0.6\n\
            psi = exp_poly:1:2\n\
            checkpoints = 10000,100000\n\
            thresholds = 10000:64,100000:256\n\
            paths = 7\n\
            seed = 18446744073709551615\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.mode, Mode::Truncate);
        assert_eq!(c.psi, PsiFunction::ExpPoly { c: 1.0, degree: 2.0 });
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(c.thresholds, Some(vec![(10_000, 64.0), (100_000, 256.0)]));
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);

        let pareto = "observable = pareto\nalpha = 0.5\nschedule = explicit\nschedule_pairs = 1000:10\ncheckpoints = 1000\n";
        let c = ExperimentConfig::parse(pareto).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn all_offending_keys_are_listed() {
        let text = "eta = four\npaths = 0\nbogus = 1\nseed = 1\nseed = 2\nnot a pair\n";
        let Err(Error::Config(errors)) = ExperimentConfig::parse(text) else { panic!() };
        let joined = errors.join("\n");
        for key in ["eta", "bogus", "seed", "line 6"] {
            assert!(joined.contains(key), "{key} missing from {joined}");
        }
        // Range checks run once the syntax is clean.
        let Err(Error::Config(errors)) = ExperimentConfig::parse("paths = 0\neps = 0.3\ncheckpoints = 10,5\n") else {
            panic!()
        };
        assert_eq!(errors.len(), 3, "{errors:?}");
    }

    #[test]
    fn hypothesis_violation_is_explained() {
        let Err(Error::Config(errors)) = ExperimentConfig::parse("eta = 2\n") else { panic!() };
        assert!(errors[0].starts_with("observable"));
        assert!(errors[0].contains("eta > 1/q"));
        let Err(Error::Config(errors)) = ExperimentConfig::parse("observable = pareto\nstochastic = 0.9,0.1,0.5,0.5\n") else {
            panic!()
        };
        assert!(errors[0].contains("Bernoulli"));
        let Err(Error::Config(errors)) = ExperimentConfig::parse("observable = pareto\n") else { panic!() };
        assert!(errors[0].contains("stpete"), "{errors:?}");
        let Err(Error::Config(errors)) = ExperimentConfig::parse("transition = 0,1,1,0\n") else { panic!() };
        assert!(errors[0].starts_with("transition"));
    }
}
