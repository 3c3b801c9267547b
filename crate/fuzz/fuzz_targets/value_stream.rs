#![no_main]

use libfuzzer_sys::fuzz_target;
use trimshift::{MarkovMeasure, Observable, ParetoObservable, ReturnTimeObservable};

// Decodes arbitrary binary symbol streams into observable values.
fuzz_target!(|data: &[u8]| {
    let measure = MarkovMeasure::bernoulli_uniform(2).unwrap();
    let symbols: Vec<u8> = data.iter().flat_map(|b| (0..8).map(move |i| (b >> i) & 1)).collect();
    let observables = [
        Observable::ReturnTime(ReturnTimeObservable::new(&measure, 4.0, 0, 100).unwrap()),
        Observable::Pareto(ParetoObservable::new(0.5, 128).unwrap()),
    ];
    for obs in &observables {
        let mut stream = obs.values(symbols.iter().copied());
        for (i, v) in stream.by_ref().enumerate() {
            match v {
                Ok(v) => {
                    assert!(v.is_finite() && v >= 1.0);
                    if let Ok(direct) = obs.eval(&symbols[i..]) {
                        assert_eq!(direct, v);
                    }
                }
                Err(_) => break,
            }
        }
    }
});
