//! Replays the checked-in fuzz seeds through the same assertions as the
//! fuzz targets, so the corpus stays meaningful on a stable toolchain.

use std::path::{Path, PathBuf};

use rrldp::graph::WeightedBipartiteGraph;
use rrldp::mechanisms::{build_matrix, MechanismSpec};
use rrldp::protocols::{reports_from_csv, reports_to_csv};
use rrldp::ProbabilityMatrix;
use rrldp_sim::ExperimentConfig;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let text = std::fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Runs `check` on every seed; at least one must parse.
fn replay(target: &str, check: impl Fn(&str) -> bool) {
    let all = seeds(target);
    let parsed = all.iter().filter(|(_, t)| check(t)).count();
    assert!(parsed > 0, "{target}: no seed parses");
}

#[test]
fn mechanism_config_seeds() {
    replay("mechanism_config", |text| {
        let Ok(spec) = MechanismSpec::from_config_str(text) else { return false };
        let m = build_matrix(&spec).unwrap();
        let again = MechanismSpec::from_config_str(&spec.to_config_string()).unwrap();
        assert_eq!(build_matrix(&again).unwrap().to_rows(), m.to_rows());
        true
    });
}

#[test]
fn matrix_csv_seeds() {
    let bad = seeds("matrix_csv").into_iter().filter(|(_, t)| ProbabilityMatrix::from_csv(t).is_err()).count();
    assert!(bad > 0);
    replay("matrix_csv", |text| {
        let Ok(m) = ProbabilityMatrix::from_csv(text) else { return false };
        assert_eq!(ProbabilityMatrix::from_csv(&m.to_csv()).unwrap().to_rows(), m.to_rows());
        true
    });
}

#[test]
fn edge_list_seeds() {
    replay("edge_list", |text| {
        let Ok(g) = WeightedBipartiteGraph::from_edge_list(text) else { return false };
        assert_eq!(WeightedBipartiteGraph::from_edge_list(&g.to_edge_list()).unwrap(), g);
        true
    });
}

#[test]
fn reports_csv_seeds() {
    replay("reports_csv", |text| {
        let Ok(r) = reports_from_csv(text) else { return false };
        assert_eq!(reports_from_csv(&reports_to_csv(&r)).unwrap(), r);
        true
    });
}

#[test]
fn experiment_config_seeds() {
    replay("experiment_config", |text| {
        let Ok(cfg) = ExperimentConfig::from_toml(text) else { return false };
        let echo = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(echo.to_toml(), cfg.to_toml());
        cfg.validate(None).is_ok()
    });
}
