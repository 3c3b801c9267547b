//! Replays the checked-in fuzz corpus on stable, with the same assertions
//! as the fuzz targets.

use std::fs;
use std::path::PathBuf;

use trimshift::shift::validate_transition;
use trimshift::{ExperimentConfig, ExperimentReport, MarkovMeasure, Observable, ParetoObservable, ReturnTimeObservable, ShiftSystem};

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|f| fs::read(f).unwrap()).collect()
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for seed in corpus("config_parse") {
        let text = String::from_utf8(seed).unwrap();
        if let Ok(config) = ExperimentConfig::parse(&text) {
            assert_eq!(ExperimentConfig::parse(&config.to_text()).as_ref(), Ok(&config));
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn report_seeds() {
    for seed in corpus("report_csv") {
        let report = ExperimentReport::from_csv(std::str::from_utf8(&seed).unwrap()).unwrap();
        let again = ExperimentReport::from_csv(&report.to_csv()).unwrap();
        assert_eq!(again.to_csv(), report.to_csv());
        trimshift::summarize(&report).unwrap();
    }
}

#[test]
fn transition_seeds() {
    let mut valid = 0;
    for seed in corpus("transition_matrix") {
        let (&k, entries) = seed.split_first().unwrap();
        let k = usize::from(k % 17);
        let entries: Vec<i64> = entries.iter().map(|&b| i64::from(b) - 1).collect();
        let rows: Vec<Vec<i64>> = entries.chunks(k.max(1)).map(<[i64]>::to_vec).collect();
        let _ = validate_transition(&rows);
        let Ok(system) = ShiftSystem::from_row_major(k, &entries, 0.5) else { continue };
        let p: Vec<Vec<f64>> = system
            .matrix()
            .iter()
            .map(|row| {
                let allowed = row.iter().sum::<i64>() as f64;
                row.iter().map(|&a| a as f64 / allowed).collect()
            })
            .collect();
        let measure = MarkovMeasure::new(system, p).unwrap();
        assert!((measure.stationary().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        valid += 1;
    }
    assert_eq!(valid, 3);
}

#[test]
fn value_stream_seeds() {
    let measure = MarkovMeasure::bernoulli_uniform(2).unwrap();
    let observables = [
        Observable::ReturnTime(ReturnTimeObservable::new(&measure, 4.0, 0, 100).unwrap()),
        Observable::Pareto(ParetoObservable::new(0.5, 128).unwrap()),
    ];
    for seed in corpus("value_stream") {
        let symbols: Vec<u8> = seed.iter().flat_map(|b| (0..8).map(move |i| (b >> i) & 1)).collect();
        for obs in &observables {
            for (i, v) in obs.values(symbols.iter().copied()).enumerate() {
                let Ok(v) = v else { break };
                assert!(v.is_finite() && v >= 1.0);
                if let Ok(direct) = obs.eval(&symbols[i..]) {
                    assert_eq!(direct, v);
                }
            }
        }
    }
}
