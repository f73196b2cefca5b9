#![no_main]

use libfuzzer_sys::fuzz_target;
use rrldp::mechanisms::{build_matrix, MechanismSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = MechanismSpec::from_config_str(text) else { return };
    // Huge answer counts are valid but not worth allocating here.
    if spec.answers() > 64 {
        return;
    }
    if let Ok(m) = build_matrix(&spec) {
        for row in m.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let again = MechanismSpec::from_config_str(&spec.to_config_string()).expect("echo parses");
        assert_eq!(build_matrix(&again).expect("echo builds").to_rows(), m.to_rows());
    }
});
