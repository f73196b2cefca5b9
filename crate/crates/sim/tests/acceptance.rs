//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;

use rrldp::estimators::{var_ewrr3, BIAS_TOLERANCE};
use rrldp::mechanisms::{build_matrix, perturb, AnswerIndex, MechanismSpec};
use rrldp::privacy::{optimal_p_high, optimal_p_low, variance_sweep, verify_dagger_boundary, FeasibleRegion};
use rrldp::protocols::{
    lpp_matrix, lpp_respond, lppdagger_matrix, pckv_perturb, ue_matrix, ProtocolParams, Tuple, UeParams,
};
use rrldp::rng::Streams;
use rrldp::stats::chi_square_gof;
use rrldp::ProbabilityMatrix;
use rrldp_sim::audit::run_budget_audit;
use rrldp_sim::config::{
    AuditConfig, EstimatorChoice, ExperimentConfig, FrequencyConfig, EXACT_TOLERANCE, LPP_TOLERANCE,
};
use rrldp_sim::config::{Epsilon, SweepConfig, SweepRegion};
use rrldp_sim::frequency::{run_frequency_experiment, FrequencyResult};
use rrldp_sim::graph_experiment::run_graph_experiment;
use rrldp_sim::sweep::{run_bound_sweep, SweepResult};

const SEED: u64 = 7;
const N: u64 = 100_000;
const R: usize = 500;
const Z: f64 = 4.0;
const LN2: f64 = std::f64::consts::LN_2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn frequency(mechanism: MechanismSpec, truth: &[f64], variance_tolerance: Option<f64>) -> FrequencyResult {
    let c = FrequencyConfig {
        mechanism,
        truth: truth.to_vec(),
        participants: N,
        replicates: R,
        estimator: EstimatorChoice::ClosedForm,
        z_threshold: Z,
        variance_tolerance,
    };
    run_frequency_experiment(&c, SEED).expect("frequency experiment runs")
}

fn quantity<'a>(r: &'a FrequencyResult, q: &str) -> &'a rrldp_sim::frequency::QuantitySummary {
    r.summary.iter().find(|s| s.quantity == q).expect("quantity present")
}

fn unbiasedness() -> Outcome {
    use MechanismSpec::*;
    let families: Vec<(&str, Vec<(MechanismSpec, Vec<f64>)>)> = vec![
        (
            "ewrr3",
            vec![
                (Ewrr { p: 0.8, n: 3 }, vec![0.5, 0.3, 0.2]),
                (Ewrr { p: 0.6, n: 3 }, vec![0.2, 0.5, 0.3]),
                (Ewrr { p: 0.2, n: 3 }, vec![0.1, 0.1, 0.8]),
            ],
        ),
        (
            "ewrrn(n=2)",
            vec![
                (Ewrr { p: 0.8, n: 2 }, vec![0.3, 0.7]),
                (Ewrr { p: 0.3, n: 2 }, vec![0.6, 0.4]),
                (Ewrr { p: 0.9, n: 2 }, vec![0.5, 0.5]),
            ],
        ),
        (
            "ewrrn(n=4)",
            vec![
                (Ewrr { p: 0.7, n: 4 }, vec![0.4, 0.3, 0.2, 0.1]),
                (Ewrr { p: 0.5, n: 4 }, vec![0.25, 0.25, 0.25, 0.25]),
                (Ewrr { p: 0.1, n: 4 }, vec![0.1, 0.2, 0.3, 0.4]),
            ],
        ),
        (
            "rr3_dagger",
            vec![
                (Rr3Dagger { p1: 0.6, p2: 0.7 }, vec![0.4, 0.35, 0.25]),
                (Rr3Dagger { p1: 0.5, p2: 0.8 }, vec![0.2, 0.3, 0.5]),
                (Rr3Dagger { p1: 0.8, p2: 0.4 }, vec![0.7, 0.2, 0.1]),
            ],
        ),
        (
            "rr3_double_dagger",
            vec![
                (Rr3DoubleDagger { p1: 0.7, p2: 0.6 }, vec![0.4, 0.35, 0.25]),
                (Rr3DoubleDagger { p1: 0.8, p2: 0.9 }, vec![0.2, 0.3, 0.5]),
                (Rr3DoubleDagger { p1: 0.3, p2: 0.75 }, vec![0.6, 0.1, 0.3]),
            ],
        ),
        (
            "rr3_club",
            vec![
                (Rr3Club { p1: 0.6, p2: 0.7, q: 0.8 }, vec![0.4, 0.35, 0.25]),
                (Rr3Club { p1: 0.75, p2: 0.65, q: 0.7 }, vec![0.2, 0.3, 0.5]),
                (Rr3Club { p1: 0.9, p2: 0.8, q: 0.95 }, vec![0.6, 0.1, 0.3]),
            ],
        ),
    ];
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (family, settings) in &families {
        for (spec, truth) in settings {
            let r = frequency(spec.clone(), truth, None);
            let z0 = quantity(&r, "pi0").z;
            worst = worst.max(z0.abs());
            pass &= z0.abs() < Z;
            if let Some(bias) = r.printed_pi1_bias {
                let reported = quantity(&r, "pi1");
                pass &= reported.z.abs() < Z;
                worst = worst.max(reported.z.abs());
                if bias.abs() > BIAS_TOLERANCE {
                    notes.push(format!(
                        "{spec}: printed pi1 biased by {bias:.6}, inversion fallback z = {:.2}",
                        reported.z
                    ));
                }
            } else {
                // n-answer EWRR reports every coordinate by its closed form.
                for s in r.summary.iter().filter(|s| s.checked) {
                    pass &= s.z.abs() < Z;
                    worst = worst.max(s.z.abs());
                }
            }
            if !r.pass {
                notes.push(format!("{family} {spec}: run failed"));
                pass = false;
            }
        }
    }
    let mut detail = format!("18 settings, N = {N}, R = {R}; max |z| = {worst:.2}");
    for n in notes {
        detail.push_str("\n    ");
        detail.push_str(&n);
    }
    outcome(pass, detail)
}

fn variance_reproduction() -> Outcome {
    use MechanismSpec::*;
    let settings: [(MechanismSpec, Vec<f64>); 3] = [
        (Ewrr { p: 0.8, n: 3 }, vec![0.5, 0.3, 0.2]),
        (Rr3Dagger { p1: 0.6, p2: 0.7 }, vec![0.4, 0.35, 0.25]),
        (Rr3Club { p1: 0.6, p2: 0.7, q: 0.8 }, vec![0.3, 0.45, 0.25]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (spec, truth) in settings {
        let r = frequency(spec.clone(), &truth, Some(0.1));
        let s = quantity(&r, "pi0");
        let ok = (s.variance_ratio - 1.0).abs() <= 0.1;
        pass &= ok;
        parts.push(format!("{spec}: ratio {:.4}", s.variance_ratio));
    }
    let v = var_ewrr3(0.5, 0.8, 1000).expect("valid");
    let derived_ok = ((v - 5.0510e-4) / 5.0510e-4).abs() < 1e-4;
    pass &= derived_ok;
    parts.push(format!("Var(0.5, 0.8, N=1000) = {v:.4e}"));
    outcome(pass, parts.join("; "))
}

fn bound_formulas() -> Outcome {
    let hi = optimal_p_high(LN2, 3).expect("valid");
    let lo = optimal_p_low(LN2, 3).expect("valid");
    let exact = hi == 0.5 && lo == 0.2;
    let up = variance_sweep(&FeasibleRegion::omega(LN2, 3), 0.5, 1000, 50).expect("sweep");
    let down = variance_sweep(&FeasibleRegion::omega_prime(LN2, 3), 0.5, 1000, 50).expect("sweep");
    let mut pass = exact;
    pass &= up.strictly_decreasing && up.derivative_sign_ok == Some(true) && up.optimum_in_region;
    pass &= down.strictly_increasing && down.derivative_sign_ok == Some(true) && down.optimum_in_region;
    for region in [SweepRegion::Omega, SweepRegion::OmegaPrime] {
        let c = SweepConfig { region, epsilon: Epsilon(LN2), n: 3, points: 50, pi0: 0.5, participants: 1000 };
        pass &= matches!(run_bound_sweep(&c), Ok(SweepResult::Ewrr { pass: true, .. }));
    }
    outcome(
        pass,
        format!(
            "p_high = {hi}, p_low = {lo}; Omega decreasing = {}, Omega' increasing = {}",
            up.strictly_decreasing, down.strictly_increasing
        ),
    )
}

fn dagger_boundary() -> Outcome {
    let grid = 200;
    let c = verify_dagger_boundary(LN2, grid, 0.5).expect("valid epsilon");
    let spacing = (2.0 / 3.0 - 1.0 / 3.0) / grid as f64;
    let lambda_ok = c.result.boundary_set.len() == 1 && (c.result.boundary_set[0] - 2.0 / 3.0).abs() <= spacing;
    let pass = c.interior_local_minima == 0 && c.interior_points > 0 && lambda_ok;
    outcome(
        pass,
        format!(
            "{} interior points, {} local minima, boundary set {:?}",
            c.interior_points, c.interior_local_minima, c.result.boundary_set
        ),
    )
}

fn budget_audit() -> Outcome {
    let text = std::fs::read_to_string(configs_dir().join("audit.toml")).expect("audit config");
    let cfg = ExperimentConfig::from_toml(&text).expect("parses");
    let audit: AuditConfig = cfg.audit.expect("audit section");
    assert_eq!((audit.grid_points, audit.dummy_grid_points, audit.random_pairs), (201, 401, 20));
    let r = run_budget_audit(&audit, SEED).expect("audit runs");
    let mut pass = r.pass;
    let tol_ok = r.rows.iter().all(|row| {
        let want = if row.check == "lpp" { LPP_TOLERANCE } else { EXACT_TOLERANCE };
        row.tolerance <= want && row.abs_diff <= want
    });
    pass &= tol_ok;
    pass &= !r.dummy_weight.is_empty() && r.dummy_weight.iter().all(|d| d.argmin == [0.0]);
    pass &= r.comparisons.len() == 20 && r.comparisons.iter().all(|c| c.lpp_dagger < c.lpp);
    let max_diff = r.rows.iter().map(|x| x.abs_diff).fold(0.0, f64::max);
    outcome(
        pass,
        format!(
            "{} closed-form rows (max |diff| = {max_diff:.1e}), dummy-weight argmin {{0}} in {} cases, {} / {} random pairs with lpp_dagger < lpp",
            r.rows.len(),
            r.dummy_weight.len(),
            r.comparisons.iter().filter(|c| c.pass).count(),
            r.comparisons.len()
        ),
    )
}

fn protocol_end_to_end() -> Outcome {
    let path = configs_dir().join("graph_lppdagger.toml");
    let cfg = ExperimentConfig::load(&path).expect("graph config");
    let v = cfg.validate(path.parent()).expect("valid");
    let g = v.graph.as_ref().expect("graph");
    let params = v.protocol.expect("protocol");
    let ok_params = params == ProtocolParams::lpp_dagger(4f64.ln(), 4f64.ln()).expect("valid");
    let reps = v.config.graph.as_ref().expect("section").replicates;
    let r = run_graph_experiment(g, &params, reps, Z, SEED).expect("runs");
    let worst = r.summary.iter().filter(|s| s.item.is_some()).map(|s| s.z.abs()).fold(0.0, f64::max);
    let per_item_ok = r.summary.iter().filter(|s| s.item.is_some()).all(|s| s.z.abs() < Z);
    let averages_ok = r.averages.iter().all(|a| a.recomputes_exactly);
    let pass = ok_params && g.n() == 100_000 && g.m() == 5 && reps == 100 && per_item_ok && averages_ok;
    outcome(
        pass,
        format!(
            "n = {}, m = {}, R = {reps}: max |z| over k_j, w_j = {worst:.2}; averages recompute exactly = {averages_ok}",
            g.n(),
            g.m()
        ),
    )
}

const SAMPLES: usize = 1_000_000;
const ALPHA: f64 = 0.001;

struct Fidelity {
    rows: usize,
    worst_p: f64,
    failures: Vec<String>,
}

impl Fidelity {
    fn check(&mut self, label: String, counts: &[u64], expected: &[f64]) {
        let t = chi_square_gof(counts, expected).expect("valid counts");
        self.rows += 1;
        self.worst_p = self.worst_p.min(t.p_value);
        if t.p_value < ALPHA {
            self.failures.push(format!("{label}: p = {:.2e}", t.p_value));
        }
    }

    fn matrix_rows(&mut self, m: &ProbabilityMatrix, streams: &Streams, tag: u64) {
        for i in 0..m.m() {
            let mut rng = streams.rng("fidelity-matrix", tag, i as u64);
            let mut counts = vec![0u64; m.m()];
            let a = AnswerIndex::new(i, m.m()).expect("in range");
            for _ in 0..SAMPLES {
                counts[perturb(a, m, &mut rng).expect("sampled").value()] += 1;
            }
            self.check(format!("{} row {i}", m.label()), &counts, m.row(i));
        }
    }
}

fn tally(mut draw: impl FnMut() -> Tuple) -> [u64; 3] {
    let mut c = [0u64; 3];
    for _ in 0..SAMPLES {
        c[draw().index()] += 1;
    }
    c
}

fn mechanism_fidelity() -> Outcome {
    use MechanismSpec::*;
    let streams = Streams::new(SEED);
    let mut f = Fidelity { rows: 0, worst_p: 1.0, failures: Vec::new() };
    let specs = [
        Warner { p: 0.7 },
        Grr { p: 0.6, m: 4 },
        Ewrr { p: 0.8, n: 3 },
        Rr3Dagger { p1: 0.6, p2: 0.7 },
        Rr3DoubleDagger { p1: 0.7, p2: 0.6 },
        Rr3Club { p1: 0.6, p2: 0.7, q: 0.8 },
    ];
    let mut tag = 0;
    for s in &specs {
        f.matrix_rows(&build_matrix(s).expect("valid"), &streams, tag);
        tag += 1;
    }

    // LPP kernels at sampled (w, w̃), and the LPP‡ kernel.
    use rand::Rng;
    let mut pick = streams.rng("fidelity-params", 0, 0);
    for _ in 0..3 {
        let w: f64 = pick.random_range(-1.0..=1.0);
        let wt: f64 = pick.random_range(-1.0..=1.0);
        f.matrix_rows(&lpp_matrix(LN2, 1.0, w, wt).expect("valid"), &streams, tag);
        tag += 1;
        f.matrix_rows(&lppdagger_matrix(1.2, LN2, w).expect("valid"), &streams, tag);
        tag += 1;
    }

    // Client-side LPP and LPP‡ against their kernel rows.
    for (k, params) in [
        ProtocolParams::lpp(LN2, LN2).expect("valid"),
        ProtocolParams::lpp_dagger(LN2, LN2).expect("valid"),
        ProtocolParams::lpp(1.5, 0.5).expect("valid"),
    ]
    .iter()
    .enumerate()
    {
        for (s, w) in [None, Some(1.0), Some(0.5), Some(-0.3)].into_iter().enumerate() {
            let mut rng = streams.rng("fidelity-client", k as u64, s as u64);
            let counts = tally(|| lpp_respond(w, params, &mut rng).expect("valid"));
            let m = lpp_matrix(params.epsilon1, params.epsilon2, w.unwrap_or(0.0), 0.0).expect("valid");
            // With no edge, E[Q₁(q, w̃)] over w̃ ~ U[−1, 1] equals Q₁(q, 0).
            let row = if w.is_some() { 1 } else { 0 };
            f.check(format!("{:?} client, w = {w:?}", params.variant), &counts, m.row(row));
        }
    }

    // UE kernels and the client-side tuple perturbation.
    for (k, ue) in [
        UeParams::new(2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0).expect("valid"),
        UeParams::from_budgets(1.2, 0.8, 0.7).expect("valid"),
    ]
    .iter()
    .enumerate()
    {
        let m = ue_matrix(ue).expect("valid");
        f.matrix_rows(&m, &streams, tag);
        tag += 1;
        for t in [Tuple::Absent, Tuple::Plus, Tuple::Minus] {
            let mut rng = streams.rng("fidelity-ue", k as u64, t.index() as u64);
            let counts = tally(|| pckv_perturb(t, ue, &mut rng).expect("valid"));
            f.check(format!("pckv_perturb {ue:?} {t:?}"), &counts, m.row(t.index()));
        }
    }

    let mut detail = format!("{} rows x {SAMPLES} samples, alpha = {ALPHA}; smallest p = {:.4}", f.rows, f.worst_p);
    for x in &f.failures {
        detail.push_str("\n    ");
        detail.push_str(x);
    }
    outcome(f.failures.is_empty(), detail)
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Every shipped config through the CLI, plus `inspect` and `optimize`.
fn run_suite(out: &Path) -> Vec<String> {
    let bin = env!("CARGO_BIN_EXE_rrldp");
    let mut failures = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .expect("configs dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    entries.sort();
    for path in entries {
        let stem = path.file_stem().expect("stem").to_string_lossy().to_string();
        let text = std::fs::read_to_string(&path).expect("config");
        let sub = if stem.starts_with("mechanism") {
            "inspect"
        } else {
            match ExperimentConfig::from_toml(&text).expect("parses").kind {
                rrldp_sim::ExperimentKind::Frequency | rrldp_sim::ExperimentKind::Graph => "simulate",
                rrldp_sim::ExperimentKind::Sweep => "sweep",
                rrldp_sim::ExperimentKind::BudgetAudit => "audit",
            }
        };
        for format in ["csv", "json"] {
            let dir = out.join(format!("{stem}-{format}"));
            let mut cmd = Command::new(bin);
            cmd.arg(sub).arg("--config").arg(&path);
            if sub != "inspect" {
                cmd.args(["--seed", "7"]);
            }
            let status = cmd.args(["--format", format, "--out"]).arg(&dir).status().expect("binary runs");
            if !status.success() {
                failures.push(format!("{sub} {stem} ({format}) exited with {status}"));
            }
        }
    }
    let dir = out.join("optimize");
    let status = Command::new(bin)
        .args(["optimize", "--epsilon", "ln 2", "--format", "json", "--out"])
        .arg(&dir)
        .status()
        .expect("binary runs");
    if !status.success() {
        failures.push(format!("optimize exited with {status}"));
    }
    failures
}

fn collect_files(dir: &Path, into: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).expect("dir") {
        let p = e.expect("entry").path();
        if p.is_dir() {
            collect_files(&p, into);
        } else {
            into.push(p);
        }
    }
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    let mut failures = run_suite(a.path());
    failures.extend(run_suite(b.path()));
    let mut files = Vec::new();
    collect_files(a.path(), &mut files);
    files.sort();
    let mut differing = Vec::new();
    for f in &files {
        let rel = f.strip_prefix(a.path()).expect("prefix");
        let other = b.path().join(rel);
        if std::fs::read(f).ok() != std::fs::read(&other).ok() {
            differing.push(rel.display().to_string());
        }
    }
    let mut other_files = Vec::new();
    collect_files(b.path(), &mut other_files);
    let same_set = other_files.len() == files.len();
    let pass = failures.is_empty() && differing.is_empty() && same_set && !files.is_empty();
    let mut detail = format!("{} output files compared across two seed-7 runs", files.len());
    for x in failures.iter().chain(&differing) {
        detail.push_str("\n    ");
        detail.push_str(x);
    }
    outcome(pass, detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("unbiasedness suite", unbiasedness),
        ("variance reproduction", variance_reproduction),
        ("bound formulas", bound_formulas),
        ("dagger boundary", dagger_boundary),
        ("budget audit", budget_audit),
        ("protocol end-to-end", protocol_end_to_end),
        ("mechanism fidelity", mechanism_fidelity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} criterion {}: {name}: {}", k + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
