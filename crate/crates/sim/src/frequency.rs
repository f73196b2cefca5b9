//! Repeated sample-perturb-estimate runs for one mechanism.

use rayon::prelude::*;
use rrldp::estimators::{
    self, closed_form_estimate, inversion_variance, mle_ewrrn, mle_numeric, printed_pi1_affine, EstimateWithVariance,
};
use rrldp::mechanisms::{build_matrix, response_distribution, simulate_counts, MechanismSpec};
use rrldp::privacy::epsilon_of_matrix;
use rrldp::rng::Streams;
use rrldp::stats::{mean, sample_variance};
use rrldp::{ProbabilityMatrix, ProportionVector};
use serde::Serialize;

use crate::config::{EstimatorChoice, FrequencyConfig};
use crate::error::SimResult;
use crate::output::{num, opt, Report, Table};
use crate::summary::{z_score, BudgetEntry};

/// Which estimator family a run actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorUsed {
    ThreeAnswerClosedForm,
    EwrrClosedForm,
    Inversion,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub quantity: String,
    pub estimate: f64,
    /// Plug-in variance reported by the estimator, when it has one.
    pub variance: Option<f64>,
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantitySummary {
    pub quantity: String,
    pub truth: f64,
    pub mean: f64,
    pub empirical_variance: f64,
    pub analytic_variance: f64,
    /// Empirical over analytic variance.
    pub variance_ratio: f64,
    /// `(mean − truth) / (σ_analytic / √R)`.
    pub z: f64,
    /// Whether this quantity counts toward pass/fail. The printed π̂₁ form
    /// is audited but not checked.
    pub checked: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyResult {
    pub mechanism: MechanismSpec,
    pub label: String,
    pub estimator: EstimatorUsed,
    pub participants: u64,
    pub replicates: usize,
    pub z_threshold: f64,
    pub variance_tolerance: Option<f64>,
    pub budget: BudgetEntry,
    /// Exact expectation of the printed π̂₁ minus π₁, for three-answer
    /// families.
    pub printed_pi1_bias: Option<f64>,
    pub rows: Vec<ReplicateRow>,
    pub summary: Vec<QuantitySummary>,
    pub pass: bool,
}

struct Plan {
    used: EstimatorUsed,
    matrix: ProbabilityMatrix,
    quantities: Vec<String>,
    analytic: Vec<f64>,
    truth: Vec<f64>,
    printed_bias: Option<f64>,
}

fn three_answer(spec: &MechanismSpec) -> bool {
    matches!(
        spec,
        MechanismSpec::Ewrr { n: 3, .. }
            | MechanismSpec::Rr3Dagger { .. }
            | MechanismSpec::Rr3DoubleDagger { .. }
            | MechanismSpec::Rr3Club { .. }
    )
}

fn ewrr_like(spec: &MechanismSpec) -> Option<(f64, usize)> {
    match *spec {
        MechanismSpec::Warner { p } => Some((p, 2)),
        MechanismSpec::Grr { p, m } => Some((p, m)),
        MechanismSpec::Ewrr { p, n } => Some((p, n)),
        _ => None,
    }
}

fn plan(c: &FrequencyConfig) -> SimResult<Plan> {
    let matrix = build_matrix(&c.mechanism)?;
    let pi = ProportionVector::truth(c.truth.clone())?;
    let n = c.participants;
    let m = matrix.m();
    let mut quantities: Vec<String> = (0..m).map(|i| format!("pi{i}")).collect();
    let mut truth = c.truth.clone();
    let mut analytic = inversion_variance(&pi, &matrix, n)?;
    let mut printed_bias = None;
    let used = match c.estimator {
        EstimatorChoice::Inversion => EstimatorUsed::Inversion,
        EstimatorChoice::Numeric => EstimatorUsed::Numeric,
        EstimatorChoice::ClosedForm if three_answer(&c.mechanism) => {
            analytic[0] = estimators::closed_form_pi0_variance(&c.mechanism, &pi, n)?;
            let form = printed_pi1_affine(&c.mechanism)?;
            let response = response_distribution(&pi, &matrix)?;
            quantities.push("printed_pi1".into());
            truth.push(c.truth[1]);
            analytic.push(form.variance(response.values(), n as f64));
            printed_bias = Some(form.eval(response.values()) - c.truth[1]);
            EstimatorUsed::ThreeAnswerClosedForm
        }
        EstimatorChoice::ClosedForm => match ewrr_like(&c.mechanism) {
            Some((p, k)) => {
                for (i, a) in analytic.iter_mut().enumerate() {
                    *a = estimators::var_ewrrn(c.truth[i], p, k, n)?;
                }
                EstimatorUsed::EwrrClosedForm
            }
            None => EstimatorUsed::Inversion,
        },
    };
    Ok(Plan { used, matrix, quantities, analytic, truth, printed_bias })
}

fn flags_of(e: &EstimateWithVariance) -> String {
    e.flags.labels().join("|")
}

type Estimates = Vec<(f64, Option<f64>, String)>;

fn estimate_once(c: &FrequencyConfig, plan: &Plan, counts: &rrldp::CountVector) -> SimResult<Estimates> {
    Ok(match plan.used {
        EstimatorUsed::ThreeAnswerClosedForm => {
            let e = closed_form_estimate(&c.mechanism, counts)?;
            let pi2 = e.pi2();
            vec![
                (e.pi0.estimate, Some(e.pi0.variance), flags_of(&e.pi0)),
                (e.pi1.estimate, Some(e.pi1.variance), flags_of(&e.pi1)),
                (pi2, None, if (0.0..=1.0).contains(&pi2) { String::new() } else { "outside_unit_interval".into() }),
                (e.printed_pi1, None, String::new()),
            ]
        }
        EstimatorUsed::EwrrClosedForm => {
            let (p, k) = ewrr_like(&c.mechanism).expect("planned");
            mle_ewrrn(counts, p, k)?.iter().map(|e| (e.estimate, Some(e.variance), flags_of(e))).collect()
        }
        EstimatorUsed::Inversion => estimators::inversion_with_variance(counts, &plan.matrix)?
            .iter()
            .map(|e| (e.estimate, Some(e.variance), flags_of(e)))
            .collect(),
        EstimatorUsed::Numeric => {
            mle_numeric(counts, &plan.matrix)?.values().iter().map(|&v| (v, None, String::new())).collect()
        }
    })
}

/// Samples `N` answers from π, perturbs them and estimates π, `R` times.
///
/// Replicate `r` draws from stream `("frequency", r, 0)`, so results do not
/// depend on how replicates are scheduled.
pub fn run_frequency_experiment(c: &FrequencyConfig, seed: u64) -> SimResult<FrequencyResult> {
    let plan = plan(c)?;
    let pi = ProportionVector::truth(c.truth.clone())?;
    let streams = Streams::new(seed);
    let per_rep: Vec<Estimates> = (0..c.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.rng("frequency", r as u64, 0);
            let counts = simulate_counts(c.participants, &pi, &plan.matrix, &mut rng)?;
            estimate_once(c, &plan, &counts)
        })
        .collect::<SimResult<_>>()?;

    let mut rows = Vec::with_capacity(per_rep.len() * plan.quantities.len());
    for (r, est) in per_rep.iter().enumerate() {
        for (q, (v, var, flags)) in plan.quantities.iter().zip(est) {
            rows.push(ReplicateRow {
                replicate: r,
                quantity: q.clone(),
                estimate: *v,
                variance: *var,
                flags: flags.clone(),
            });
        }
    }
    let summary = summarize(&rows, &plan.quantities, &plan.truth, &plan.analytic, c);
    let pass = summary.iter().filter(|s| s.checked).all(|s| s.pass);
    Ok(FrequencyResult {
        mechanism: c.mechanism.clone(),
        label: c.mechanism.to_string(),
        estimator: plan.used,
        participants: c.participants,
        replicates: c.replicates,
        z_threshold: c.z_threshold,
        variance_tolerance: c.variance_tolerance,
        budget: BudgetEntry::from_result(epsilon_of_matrix(&plan.matrix)),
        printed_pi1_bias: plan.printed_bias,
        rows,
        summary,
        pass,
    })
}

/// Per-quantity summary computed from the replicate rows alone.
pub fn summarize(
    rows: &[ReplicateRow],
    quantities: &[String],
    truth: &[f64],
    analytic: &[f64],
    c: &FrequencyConfig,
) -> Vec<QuantitySummary> {
    quantities
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let xs: Vec<f64> = rows.iter().filter(|r| &r.quantity == q).map(|r| r.estimate).collect();
            let m = mean(&xs);
            let ev = sample_variance(&xs);
            let z = z_score(m, truth[k], analytic[k], xs.len());
            let ratio = ev / analytic[k];
            let checked = q != "printed_pi1";
            let mut pass = z.abs() < c.z_threshold;
            if let Some(tol) = c.variance_tolerance {
                let var_ok = if analytic[k] == 0.0 { ev == 0.0 } else { (ratio - 1.0).abs() <= tol };
                pass &= var_ok;
            }
            QuantitySummary {
                quantity: q.clone(),
                truth: truth[k],
                mean: m,
                empirical_variance: ev,
                analytic_variance: analytic[k],
                variance_ratio: ratio,
                z,
                checked,
                pass,
            }
        })
        .collect()
}

impl Report for FrequencyResult {
    fn tables(&self) -> Vec<Table> {
        let mut reps = Table::new("replicates", &["replicate", "quantity", "estimate", "variance", "flags"]);
        for r in &self.rows {
            reps.push(vec![
                r.replicate.to_string(),
                r.quantity.clone(),
                num(r.estimate),
                opt(r.variance),
                r.flags.clone(),
            ]);
        }
        let mut summary = Table::new(
            "summary",
            &[
                "quantity",
                "truth",
                "mean",
                "empirical_variance",
                "analytic_variance",
                "variance_ratio",
                "z",
                "checked",
                "pass",
            ],
        );
        for s in &self.summary {
            summary.push(vec![
                s.quantity.clone(),
                num(s.truth),
                num(s.mean),
                num(s.empirical_variance),
                num(s.analytic_variance),
                num(s.variance_ratio),
                num(s.z),
                s.checked.to_string(),
                s.pass.to_string(),
            ]);
        }
        let mut meta = Table::new("run", &["key", "value"]);
        meta.push(vec!["mechanism".into(), self.label.clone()]);
        meta.push(vec![
            "estimator".into(),
            serde_json::to_value(self.estimator).expect("enum").as_str().unwrap_or_default().into(),
        ]);
        meta.push(vec!["participants".into(), self.participants.to_string()]);
        meta.push(vec!["replicates".into(), self.replicates.to_string()]);
        meta.push(vec!["printed_pi1_bias".into(), opt(self.printed_pi1_bias)]);
        self.budget.push_rows(&mut meta);
        meta.push(vec!["pass".into(), self.pass.to_string()]);
        vec![summary, reps, meta]
    }

    fn pass(&self) -> bool {
        self.pass
    }
}
