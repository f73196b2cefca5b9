//! Shared pieces of experiment results.

use rrldp::privacy::{PrivacyBudget, Provenance};
use serde::Serialize;

use crate::output::{num, Table};

/// `(mean − truth) / √(variance / R)`. A zero variance gives 0 for an exact
/// mean and ±∞ otherwise.
pub fn z_score(mean: f64, truth: f64, variance: f64, replicates: usize) -> f64 {
    let se = (variance / replicates as f64).sqrt();
    let d = mean - truth;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

/// The ε a run is reported at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetEntry {
    /// `None` when the kernel has a zero entry and no finite ε.
    pub epsilon: Option<f64>,
    pub provenance: Option<Provenance>,
    pub inputs: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BudgetEntry {
    pub fn from_budget(b: PrivacyBudget) -> Self {
        Self { epsilon: Some(b.epsilon), provenance: Some(b.provenance), inputs: b.inputs, note: None }
    }

    pub fn from_result(r: rrldp::Result<PrivacyBudget>) -> Self {
        match r {
            Ok(b) => Self::from_budget(b),
            Err(e) => Self { epsilon: None, provenance: None, inputs: None, note: Some(e.to_string()) },
        }
    }

    pub fn push_rows(&self, t: &mut Table) {
        t.push(vec!["epsilon".into(), self.epsilon.map(num).unwrap_or_else(|| "unbounded".into())]);
        if let Some(p) = self.provenance {
            let s = serde_json::to_value(p).expect("enum");
            t.push(vec!["provenance".into(), s.as_str().unwrap_or_default().into()]);
        }
        if let Some((e1, e2)) = self.inputs {
            t.push(vec!["epsilon1".into(), num(e1)]);
            t.push(vec!["epsilon2".into(), num(e2)]);
        }
        if let Some(n) = &self.note {
            t.push(vec!["budget_note".into(), n.clone()]);
        }
    }
}
