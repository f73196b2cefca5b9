use std::path::Path;
use std::process::{Command, Output};

use rrldp_sim::ExperimentConfig;

fn rrldp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrldp")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn run_value(dir: &Path, key: &str) -> String {
    read_csv(&dir.join("run.csv")).into_iter().find(|r| r[0] == key).unwrap_or_else(|| panic!("{key} missing"))[1]
        .clone()
}

const SMALL_FREQUENCY: &str = r#"
kind = "frequency"
seed = 11

[frequency]
mechanism = { family = "ewrr", p = 0.8, n = 3 }
truth = [0.5, 0.3, 0.2]
participants = 2000
replicates = 40
"#;

#[test]
fn excluded_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL_FREQUENCY.replace("p = 0.8", "p = 0.3333333333333333"));
    let out = rrldp(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frequency.mechanism"), "{err}");
}

#[test]
fn kind_mismatch_and_unknown_fields_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.toml", SMALL_FREQUENCY);
    assert_eq!(rrldp(&["sweep", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(rrldp(&["audit", "--config", &cfg]).status.code(), Some(2));
    let typo = write(dir.path(), "typo.toml", &format!("{SMALL_FREQUENCY}\nreplicats = 3\n"));
    assert_eq!(rrldp(&["simulate", "--config", &typo]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml").display().to_string();
    assert_eq!(rrldp(&["simulate", "--config", &missing]).status.code(), Some(2));
    assert_eq!(rrldp(&["optimize", "--epsilon", "-1"]).status.code(), Some(2));
}

#[test]
fn inspect_flags_excluded_and_rejects_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let excluded = write(dir.path(), "w.toml", "family = \"warner\"\np = 0.5\n");
    let out = rrldp(&["inspect", "--config", &excluded]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("excluded,p = 1/2"));
    let bad = write(dir.path(), "x.toml", "family = \"ewrr\"\np = 1.5\nn = 3\n");
    assert_eq!(rrldp(&["inspect", "--config", &bad]).status.code(), Some(2));
    let ok = write(dir.path(), "ok.toml", "family = \"ewrr\"\np = 0.8\nn = 3\n");
    let out = rrldp(&["inspect", "--config", &ok]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("epsilon,2.0794415416798"));
}

#[test]
fn csv_output_echoes_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.toml", SMALL_FREQUENCY);
    let out_dir = dir.path().join("out");
    let out = rrldp(&["simulate", "--config", &cfg, "--seed", "3", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = ExperimentConfig::load(&out_dir.join("config.toml")).unwrap();
    let mut original = ExperimentConfig::from_toml(SMALL_FREQUENCY).unwrap();
    original.seed = 3;
    assert_eq!(echo.frequency, original.frequency);
    assert_eq!(echo.seed, 3);
    // Defaults are written out.
    assert_eq!(echo.frequency.unwrap().z_threshold, 4.0);
}

#[test]
fn summary_recomputes_from_replicate_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.toml", SMALL_FREQUENCY);
    let out_dir = dir.path().join("out");
    assert!(rrldp(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]).status.success());
    let rows = read_csv(&out_dir.join("replicates.csv"));
    let summary = read_csv(&out_dir.join("summary.csv"));
    for q in ["pi0", "pi1", "pi2"] {
        let xs: Vec<f64> = rows.iter().filter(|r| r[1] == q).map(|r| r[2].parse().unwrap()).collect();
        assert_eq!(xs.len(), 40);
        let s = summary.iter().find(|r| r[0] == q).unwrap();
        let mean: f64 = s[2].parse().unwrap();
        let var: f64 = s[3].parse().unwrap();
        assert_eq!(mean, rrldp::stats::mean(&xs));
        assert_eq!(var, rrldp::stats::sample_variance(&xs));
    }
}

#[test]
fn json_output_carries_kind_seed_and_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.toml", SMALL_FREQUENCY);
    let out_dir = dir.path().join("out");
    let out = rrldp(&["simulate", "--config", &cfg, "--format", "json", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(v["kind"], "frequency");
    assert_eq!(v["seed"], 11);
    assert_eq!(v["pass"], true);
    assert_eq!(v["result"]["summary"].as_array().unwrap().len(), 4);
    assert!(out_dir.join("config.toml").exists());
}

fn graph_config(protocol: &str) -> String {
    format!(
        r#"
kind = "graph"

[graph]
replicates = 5

[graph.protocol]
{protocol}

[graph.input]
source = "replicated"
n = 2
m = 2
edges = [[1, 1, 0.5], [2, 1, 1.0], [2, 2, -0.5]]
copies = 500
"#
    )
}

#[test]
fn lppdagger_graph_reports_its_closed_form_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.toml",
        &graph_config("variant = \"lpp_dagger\"\nepsilon1 = \"ln 2\"\nepsilon2 = \"ln 2\""),
    );
    let out_dir = dir.path().join("out");
    let out = rrldp(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eps: f64 = run_value(&out_dir, "epsilon").parse().unwrap();
    assert!((eps - (8.0f64 / 3.0).ln()).abs() < 1e-12);
    assert_eq!(run_value(&out_dir, "variant"), "lpp_dagger");
    let avg = read_csv(&out_dir.join("averages.csv"));
    assert_eq!(avg.len(), 5);
    assert!(avg.iter().all(|r| r[3] == "true"));
}

#[test]
fn pckv_graph_reports_the_larger_of_the_two_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write(dir.path(), "g.toml", &graph_config("variant = \"pckv_ue\"\nepsilon1 = \"ln 4\"\nepsilon2 = \"ln 2\""));
    let out_dir = dir.path().join("out");
    let out = rrldp(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eps: f64 = run_value(&out_dir, "epsilon").parse().unwrap();
    let expected = 2f64.ln().max((16.0f64 / 3.0).ln());
    assert!((eps - expected).abs() < 1e-12, "{eps}");
}

#[test]
fn graph_edge_list_is_resolved_against_the_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "edges.txt", "3 2\n1 1 0.5\n2 1 1.0\n2 2 -0.5\n3 2 0.0\n");
    let cfg = write(
        dir.path(),
        "g.toml",
        r#"
kind = "graph"

[graph]
replicates = 3

[graph.protocol]
variant = "lpp"
epsilon1 = 1.0
epsilon2 = 1.0

[graph.input]
source = "file"
path = "edges.txt"
"#,
    );
    let out = rrldp(&["simulate", "--config", &cfg, "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["n"], 3);
    assert_eq!(v["result"]["m"], 2);
}

#[test]
fn optimize_prints_both_optima() {
    let out = rrldp(&["optimize", "--epsilon", "ln 2"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("p_high,0.5\n"), "{text}");
    assert!(text.contains("p_low,0.2\n"), "{text}");
    assert!(text.contains("dagger_interior_local_minima,0\n"), "{text}");
}

#[test]
fn default_audit_passes() {
    let out = rrldp(&["audit"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
