//! Experiment harness for `rrldp`.
//!
//! An [`ExperimentConfig`] names one of four experiments. [`run`] executes
//! a validated config and returns an [`ExperimentResult`] that carries the
//! per-replicate rows, their summary, the budget the run is reported at and
//! an echo of the resolved config. Output is a pure function of the config
//! and seed: replicates and participants draw from keyed streams, and every
//! table is ordered by replicate and item.

pub mod audit;
pub mod config;
pub mod error;
pub mod frequency;
pub mod graph_experiment;
pub mod inspect;
pub mod output;
pub mod summary;
pub mod sweep;

use serde::Serialize;

pub use config::{ExperimentConfig, ExperimentKind, OutputFormat, ValidatedConfig};
pub use error::{SimError, SimResult};
pub use output::Report;

use crate::audit::{run_budget_audit, AuditResult};
use crate::frequency::{run_frequency_experiment, FrequencyResult};
use crate::graph_experiment::{run_graph_experiment, GraphResult};
use crate::output::Table;
use crate::sweep::{run_bound_sweep, SweepResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Frequency(FrequencyResult),
    Graph(GraphResult),
    Sweep(SweepResult),
    Audit(AuditResult),
}

/// Run metadata. Deliberately free of timestamps and thread counts so that
/// reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub rng: &'static str,
}

impl Default for Metadata {
    fn default() -> Self {
        Self { version: env!("CARGO_PKG_VERSION"), rng: "chacha8, keyed by (seed, purpose, replicate, id)" }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub pass: bool,
    pub metadata: Metadata,
    pub config: ExperimentConfig,
    pub result: Outcome,
}

impl ExperimentResult {
    pub fn outcome_tables(&self) -> Vec<Table> {
        match &self.result {
            Outcome::Frequency(r) => r.tables(),
            Outcome::Graph(r) => r.tables(),
            Outcome::Sweep(r) => r.tables(),
            Outcome::Audit(r) => r.tables(),
        }
    }
}

impl Report for ExperimentResult {
    fn tables(&self) -> Vec<Table> {
        self.outcome_tables()
    }

    fn pass(&self) -> bool {
        self.pass
    }
}

/// Executes a validated config.
pub fn run(v: &ValidatedConfig) -> SimResult<ExperimentResult> {
    let c = &v.config;
    let result = match c.kind {
        ExperimentKind::Frequency => {
            Outcome::Frequency(run_frequency_experiment(c.frequency.as_ref().expect("validated"), c.seed)?)
        }
        ExperimentKind::Graph => {
            let g = c.graph.as_ref().expect("validated");
            Outcome::Graph(run_graph_experiment(
                v.graph.as_ref().expect("validated"),
                v.protocol.as_ref().expect("validated"),
                g.replicates,
                g.z_threshold,
                c.seed,
            )?)
        }
        ExperimentKind::Sweep => Outcome::Sweep(run_bound_sweep(c.sweep.as_ref().expect("validated"))?),
        ExperimentKind::BudgetAudit => Outcome::Audit(run_budget_audit(c.audit.as_ref().expect("validated"), c.seed)?),
    };
    let pass = match &result {
        Outcome::Frequency(r) => r.pass,
        Outcome::Graph(r) => r.pass,
        Outcome::Sweep(r) => r.pass(),
        Outcome::Audit(r) => r.pass,
    };
    Ok(ExperimentResult { kind: c.kind, seed: c.seed, pass, metadata: Metadata::default(), config: c.clone(), result })
}
