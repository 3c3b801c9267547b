//! Seeded Monte-Carlo ensembles of trimmed, truncated and exceedance
//! statistics along sampled trajectories.
//!
//! Each path streams its symbols once, pushes observable values into a
//! [`TrimAccumulator`], and records one row per checkpoint. Paths are
//! independent; results are merged in path order, so reports do not depend
//! on the number of threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::measure::MarkovMeasure;
use crate::norming::{c_eps_psi, d_regvar, d_stpete, threshold_from_trim};
use crate::observable::Observable;
use crate::report::{ExperimentReport, Row};
use crate::trimming::{TrimAccumulator, DEFAULT_B_MAX};

/// Deterministic per-checkpoint quantities shared by all paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointPlan {
    pub n: u64,
    pub b_n: Option<u64>,
    pub f_n: Option<f64>,
    pub d_n: Option<f64>,
    /// `n * integral chi 1_{chi <= f_n} dmu`.
    pub expected: Option<f64>,
    /// `n * mu(chi > f_n)`.
    pub n_tail: Option<f64>,
    /// `n * mu(chi = f_n)`.
    pub n_point: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_prime: Option<f64>,
    /// `f_n^(-log q / log eta) log psi(floor log n) / n`, which must tend to 0.
    pub plateau: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub measure: MarkovMeasure,
    pub observable: Observable,
    pub plan: Vec<CheckpointPlan>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let measure = config.measure()?;
        let observable = config.build_observable(&measure)?;
        let schedule = config.trim_schedule(&observable)?;
        let mut plan = Vec::with_capacity(config.checkpoints.len());
        for &n in &config.checkpoints {
            let explicit_f = config
                .thresholds
                .as_ref()
                .and_then(|t| t.iter().find(|(m, _)| *m == n).map(|&(_, f)| f));
            let needs_b = config.mode == Mode::Trim || explicit_f.is_none();
            let b_n = if needs_b { Some(schedule.trim_at(n)?) } else { None };
            let mut p = CheckpointPlan {
                n,
                b_n,
                f_n: None,
                d_n: None,
                expected: None,
                n_tail: None,
                n_point: None,
                gamma: None,
                gamma_prime: None,
                plateau: None,
            };
            match config.mode {
                Mode::Trim => {
                    let b = b_n.expect("trim mode computes b_n");
                    // b_n = n leaves nothing to normalize; the row is recorded as degenerate.
                    p.d_n = if b < n { Some(norming_constant(&observable, n, b)?) } else { None };
                }
                Mode::Truncate | Mode::Exceedance => {
                    let f = match explicit_f {
                        Some(f) => f,
                        None => threshold_from_trim(b_n.unwrap(), n, config.v, config.eps, &config.psi, &observable)?,
                    };
                    let nf = n as f64;
                    p.f_n = Some(f);
                    p.expected = Some(nf * observable.expected_truncated(f)?);
                    p.n_tail = Some(nf * observable.tail_prob(f));
                    p.n_point = Some(nf * observable.point_prob(f));
                    p.plateau = Some(plateau(&observable, f, n, config));
                    if config.mode == Mode::Exceedance {
                        let envelope = |mass: f64| -> Result<f64> {
                            if n < 3 {
                                return Ok(f64::NAN);
                            }
                            Ok(config.v_hat * c_eps_psi(mass.max(1.0), n, config.eps, &config.psi)?)
                        };
                        p.gamma = Some(envelope(p.n_tail.unwrap())?);
                        p.gamma_prime = Some(envelope(p.n_point.unwrap())?);
                    }
                }
            }
            plan.push(p);
        }
        Ok(Self {
            config: config.clone(),
            measure,
            observable,
            plan,
        })
    }

    pub fn run(&self, options: RunOptions) -> Result<ExperimentReport> {
        let paths = self.config.paths as u64;
        let work = || -> Vec<Result<Vec<Row>>> { (0..paths).into_par_iter().map(|p| self.run_path(p)).collect() };
        let per_path = match options.threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Resource(format!("thread pool: {e}")))?
                .install(work),
            None => work(),
        };
        let mut rows = Vec::with_capacity(self.plan.len() * self.config.paths);
        for r in per_path {
            rows.extend(r?);
        }
        // Checkpoint-major order reads naturally and is independent of scheduling.
        rows.sort_by_key(|r| (r.n(), r.path()));
        Ok(ExperimentReport {
            mode: self.config.mode,
            rows,
        })
    }

    /// One trajectory, recorded at every checkpoint.
    pub fn run_path(&self, path: u64) -> Result<Vec<Row>> {
        let n_max = self.plan.last().map_or(0, |p| p.n);
        let b_max = self.plan.iter().filter_map(|p| p.b_n).max().unwrap_or(0) as usize;
        let b_max = if self.config.mode == Mode::Trim { b_max } else { b_max.min(DEFAULT_B_MAX) };
        let mut acc = TrimAccumulator::with_capacity(b_max, n_max as usize);
        let sampler = self.measure.sampler(self.config.seed, path);
        let mut values = self.observable.values(sampler);
        let mut rows = Vec::with_capacity(self.plan.len());
        for p in &self.plan {
            while (acc.count() as u64) < p.n {
                let position = values.position();
                let v = values
                    .next()
                    .expect("value streams are infinite")
                    .map_err(|e| Error::PathAborted {
                        path,
                        position,
                        source: Box::new(e),
                    })?;
                acc.push(v)?;
            }
            rows.push(self.record(&acc, p, path)?);
        }
        Ok(rows)
    }

    fn record(&self, acc: &TrimAccumulator, p: &CheckpointPlan, path: u64) -> Result<Row> {
        let n = p.n;
        Ok(match self.config.mode {
            Mode::Trim => {
                let b_n = p.b_n.unwrap();
                let s_trim = acc.trimmed_sum(b_n as usize)?;
                let d_n = p.d_n.unwrap_or(f64::NAN);
                Row::Trim {
                    n,
                    path,
                    s_n: acc.total(),
                    b_n,
                    s_trim,
                    d_n,
                    ratio: positive(s_trim / d_n),
                }
            }
            Mode::Truncate => {
                let f_n = p.f_n.unwrap();
                let t_n = acc.truncated_sum(f_n);
                let expected = p.expected.unwrap();
                Row::Truncate {
                    n,
                    path,
                    f_n,
                    t_n,
                    expected,
                    ratio: positive(t_n / expected),
                    plateau: p.plateau.unwrap(),
                    sandwich: sandwich_holds(acc, f_n)?,
                }
            }
            Mode::Exceedance => {
                let f_n = p.f_n.unwrap();
                let (above, equal) = acc.exceedance_counts(f_n);
                let n_tail = p.n_tail.unwrap();
                Row::Exceedance {
                    n,
                    path,
                    f_n,
                    above: above as u64,
                    equal: equal as u64,
                    n_tail,
                    n_point: p.n_point.unwrap(),
                    gamma: p.gamma.unwrap(),
                    gamma_prime: p.gamma_prime.unwrap(),
                    ratio: positive(above as f64 / n_tail),
                }
            }
        })
    }
}

fn positive(x: f64) -> Option<f64> {
    (x.is_finite() && x > 0.0).then_some(x)
}

fn norming_constant(observable: &Observable, n: u64, b: u64) -> Result<f64> {
    match observable {
        Observable::ReturnTime(o) => d_stpete(n, b, o.q(), o.eta(), o.r_constant()),
        Observable::Pareto(o) => d_regvar(n, b, o.alpha(), &|_| 1.0),
    }
}

fn plateau(observable: &Observable, f: f64, n: u64, config: &ExperimentConfig) -> f64 {
    let log_psi = config.psi.log_at_log(n.max(1));
    let scale = match observable {
        Observable::ReturnTime(o) => f.max(1.0).powf(-o.q().ln() / o.eta().ln()),
        Observable::Pareto(o) => 1.0 / o.tail_prob(f),
    };
    scale * log_psi / n as f64
}

/// `S_n^m >= T_n^f >= S_n^(m+e)` with `m` values above `f` and `e` equal to it,
/// up to `1e-9` relative.
pub fn sandwich_holds(acc: &TrimAccumulator, f: f64) -> Result<bool> {
    let (m, e) = acc.exceedance_counts(f);
    let t = acc.truncated_sum(f);
    let upper = acc.trimmed_sum(m)?;
    let lower = acc.trimmed_sum(m + e)?;
    let tol = 1e-9 * upper.abs().max(1.0);
    Ok(upper + tol >= t && t + tol >= lower)
}

pub fn run_trim(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentReport> {
    run_mode(config, Mode::Trim, options)
}

pub fn run_truncate(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentReport> {
    run_mode(config, Mode::Truncate, options)
}

pub fn run_exceedance(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentReport> {
    run_mode(config, Mode::Exceedance, options)
}

fn run_mode(config: &ExperimentConfig, mode: Mode, options: RunOptions) -> Result<ExperimentReport> {
    if config.mode != mode {
        return Err(Error::domain(format!(
            "config is in {} mode, not {}",
            config.mode.as_str(),
            mode.as_str()
        )));
    }
    Experiment::new(config)?.run(options)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSummary {
    pub n: u64,
    pub paths: usize,
    /// Rows whose ratio is undefined; excluded from the statistics below.
    pub degenerate: usize,
    pub ratio_median: Option<f64>,
    pub ratio_mean: Option<f64>,
    pub ratio_q25: Option<f64>,
    pub ratio_q75: Option<f64>,
    pub deviation_median: Option<f64>,
    pub deviation_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub checkpoints: Vec<CheckpointSummary>,
    /// Median `|ratio - 1|` never increases from one checkpoint to the next.
    pub median_deviation_nonincreasing: bool,
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(report: &ExperimentReport) -> Result<Summary> {
    if report.rows.is_empty() {
        return Err(Error::domain("cannot summarize an empty report"));
    }
    let mut ns: Vec<u64> = report.rows.iter().map(Row::n).collect();
    ns.sort_unstable();
    ns.dedup();
    let checkpoints: Vec<CheckpointSummary> = ns
        .iter()
        .map(|&n| {
            let rows: Vec<&Row> = report.rows.iter().filter(|r| r.n() == n).collect();
            let mut ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio()).collect();
            ratios.sort_by(f64::total_cmp);
            let mut devs: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
            devs.sort_by(f64::total_cmp);
            let some = |f: &dyn Fn() -> f64| (!ratios.is_empty()).then(f);
            CheckpointSummary {
                n,
                paths: rows.len(),
                degenerate: rows.len() - ratios.len(),
                ratio_median: some(&|| quantile(&ratios, 0.5)),
                ratio_mean: some(&|| ratios.iter().sum::<f64>() / ratios.len() as f64),
                ratio_q25: some(&|| quantile(&ratios, 0.25)),
                ratio_q75: some(&|| quantile(&ratios, 0.75)),
                deviation_median: some(&|| quantile(&devs, 0.5)),
                deviation_max: devs.last().copied(),
            }
        })
        .collect();
    let median_deviation_nonincreasing = checkpoints.windows(2).all(|w| {
        matches!((w[0].deviation_median, w[1].deviation_median), (Some(a), Some(b)) if b <= a)
    });
    Ok(Summary {
        mode: report.mode,
        checkpoints,
        median_deviation_nonincreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScheduleSpec;

    fn canonical(mode: Mode) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            checkpoints: vec![1_000, 10_000],
            paths: 8,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn degenerate_schedule_gives_degenerate_ratio() {
        let config = ExperimentConfig {
            schedule: ScheduleSpec::Explicit(vec![(1_000, 1_000)]),
            checkpoints: vec![1_000],
            paths: 1,
            ..canonical(Mode::Trim)
        };
        let report = run_trim(&config, RunOptions::default()).unwrap();
        let Row::Trim { s_trim, ratio, .. } = report.rows[0] else { panic!() };
        assert_eq!(s_trim, 0.0);
        assert_eq!(ratio, None);
        assert_eq!(summarize(&report).unwrap().checkpoints[0].degenerate, 1);
    }

    #[test]
    fn stpete_norming_matches_closed_form() {
        let e = Experiment::new(&canonical(Mode::Trim)).unwrap();
        for p in &e.plan {
            let (n, b) = (p.n as f64, p.b_n.unwrap() as f64);
            assert!((p.d_n.unwrap() / (n * n / (2.0 * b)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_do_not_depend_on_threads() {
        for mode in [Mode::Trim, Mode::Truncate, Mode::Exceedance] {
            let e = Experiment::new(&canonical(mode)).unwrap();
            let one = e.run(RunOptions { threads: Some(1) }).unwrap();
            let four = e.run(RunOptions { threads: Some(4) }).unwrap();
            assert_eq!(one.to_csv(), four.to_csv());
        }
    }

    #[test]
    fn truncation_above_the_maximum_is_the_full_sum() {
        let config = ExperimentConfig {
            thresholds: Some(vec![(1_000, 1e300), (10_000, 0.5)]),
            ..canonical(Mode::Truncate)
        };
        let e = Experiment::new(&config).unwrap();
        for path in 0..4 {
            let acc_rows = e.run_path(path).unwrap();
            let Row::Truncate { t_n, sandwich, .. } = acc_rows[0] else { panic!() };
            let s_n: f64 = {
                let sampler = e.measure.sampler(config.seed, path);
                e.observable.values(sampler).take(1_000).map(|v| v.unwrap()).sum()
            };
            assert!((t_n - s_n).abs() <= 1e-9 * s_n);
            assert!(sandwich);
            // Below the smallest atom everything is truncated away.
            let Row::Truncate { t_n, expected, ratio, .. } = acc_rows[1] else { panic!() };
            assert_eq!((t_n, expected, ratio), (0.0, 0.0, None));
        }
    }

    #[test]
    fn exceedance_counts_partition_and_bernoulli_law() {
        let config = ExperimentConfig {
            thresholds: Some(vec![(10_000, 1.0)]),
            checkpoints: vec![10_000],
            paths: 200,
            ..canonical(Mode::Exceedance)
        };
        let report = run_exceedance(&config, RunOptions::default()).unwrap();
        let n = 10_000f64;
        let bound = 3.0 * (n / 4.0).sqrt() * 2f64.sqrt();
        let mut outside = 0;
        for row in &report.rows {
            let Row::Exceedance { above, equal, n_tail, .. } = *row else { panic!() };
            assert_eq!(n_tail, n / 2.0);
            assert!(above + equal <= 10_000);
            if (above as f64 - n_tail).abs() > bound {
                outside += 1;
            }
        }
        assert!(outside * 100 < report.rows.len(), "{outside} paths outside");

        let config = ExperimentConfig {
            thresholds: Some(vec![(10_000, 4f64.powi(60))]),
            ..config
        };
        let report = run_exceedance(&config, RunOptions::default()).unwrap();
        assert!(report.rows.iter().all(|r| matches!(r, Row::Exceedance { above: 0, .. })));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        assert!(run_truncate(&canonical(Mode::Trim), RunOptions::default()).is_err());
    }

    fn synthetic(ratios: &[(u64, u64, Option<f64>)]) -> ExperimentReport {
        ExperimentReport {
            mode: Mode::Trim,
            rows: ratios
                .iter()
                .map(|&(n, path, ratio)| Row::Trim {
                    n,
                    path,
                    s_n: 1.0,
                    b_n: 1,
                    s_trim: ratio.unwrap_or(0.0),
                    d_n: 1.0,
                    ratio,
                })
                .collect(),
        }
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&synthetic(&[(10, 0, Some(0.9)), (10, 1, Some(1.0)), (10, 2, Some(1.1))])).unwrap();
        assert!((s.checkpoints[0].deviation_median.unwrap() - 0.1).abs() < 1e-12);
        assert!((s.checkpoints[0].ratio_median.unwrap() - 1.0).abs() < 1e-12);

        let single = summarize(&synthetic(&[(10, 0, Some(1.3))])).unwrap();
        let c = &single.checkpoints[0];
        assert_eq!(c.ratio_median, Some(1.3));
        assert_eq!(c.ratio_q25, Some(1.3));
        assert_eq!(c.ratio_mean, Some(1.3));

        let a = synthetic(&[(10, 0, Some(0.5)), (10, 1, Some(1.2)), (100, 0, Some(0.9)), (100, 1, None)]);
        let mut b = a.clone();
        b.rows.reverse();
        assert_eq!(summarize(&a).unwrap(), summarize(&b).unwrap());
        let s = summarize(&a).unwrap();
        assert_eq!(s.checkpoints[1].degenerate, 1);
        assert!(s.median_deviation_nonincreasing);

        assert!(summarize(&synthetic(&[])).is_err());
    }
}
