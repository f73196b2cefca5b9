#![no_main]

use libfuzzer_sys::fuzz_target;
use rrldp::protocols::{reports_from_csv, reports_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(reports) = reports_from_csv(text) {
        assert_eq!(reports_from_csv(&reports_to_csv(&reports)).expect("round trip"), reports);
    }
});
