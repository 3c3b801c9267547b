#![no_main]

use libfuzzer_sys::fuzz_target;
use trimshift::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::parse(text) {
        // Accepted configs print back to themselves.
        assert_eq!(ExperimentConfig::parse(&config.to_text()).as_ref(), Ok(&config));
    }
});
