#![no_main]

use libfuzzer_sys::fuzz_target;
use rrldp::ProbabilityMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = ProbabilityMatrix::from_csv(text) {
        let back = ProbabilityMatrix::from_csv(&m.to_csv()).expect("round trip");
        assert_eq!(back.to_rows(), m.to_rows());
        let _ = m.inverse();
    }
});
