#![no_main]

use libfuzzer_sys::fuzz_target;
use trimshift::ExperimentReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = ExperimentReport::from_csv(text) {
        let again = ExperimentReport::from_csv(&report.to_csv()).expect("written reports parse");
        assert_eq!(again.to_csv(), report.to_csv());
        let _ = trimshift::summarize(&report);
    }
});
