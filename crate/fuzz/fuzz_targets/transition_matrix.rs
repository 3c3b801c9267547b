#![no_main]

use libfuzzer_sys::fuzz_target;
use trimshift::shift::validate_transition;
use trimshift::{MarkovMeasure, ShiftSystem};

// First byte: alphabet size; the rest: row-major entries.
fuzz_target!(|data: &[u8]| {
    let Some((&k, entries)) = data.split_first() else { return };
    let k = usize::from(k % 17);
    let entries: Vec<i64> = entries.iter().map(|&b| i64::from(b) - 1).collect();
    let rows: Vec<Vec<i64>> = entries.chunks(k.max(1)).map(<[i64]>::to_vec).collect();
    let _ = validate_transition(&rows);
    let Ok(system) = ShiftSystem::from_row_major(k, &entries, 0.5) else { return };
    let p: Vec<Vec<f64>> = system
        .matrix()
        .iter()
        .map(|row| {
            let allowed = row.iter().sum::<i64>() as f64;
            row.iter().map(|&a| a as f64 / allowed).collect()
        })
        .collect();
    let measure = MarkovMeasure::new(system, p).expect("validated systems carry a stationary measure");
    let total: f64 = measure.stationary().iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
});
