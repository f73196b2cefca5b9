//! Kernel and ε of a single mechanism.

use rrldp::mechanisms::{build_matrix, MechanismSpec};
use rrldp::privacy::epsilon_of_matrix;
use serde::Serialize;

use crate::error::SimResult;
use crate::output::{num, Report, Table};
use crate::summary::BudgetEntry;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectReport {
    pub mechanism: MechanismSpec,
    pub label: String,
    pub matrix: Vec<Vec<f64>>,
    pub determinant: f64,
    pub budget: BudgetEntry,
    /// Parameter values at which the closed-form estimators are undefined.
    pub excluded: Vec<String>,
}

pub fn inspect(spec: &MechanismSpec) -> SimResult<InspectReport> {
    let excluded = spec.validate()?.into_iter().map(|e| e.condition).collect();
    let matrix = build_matrix(spec)?;
    Ok(InspectReport {
        mechanism: spec.clone(),
        label: spec.to_string(),
        determinant: matrix.determinant(),
        budget: BudgetEntry::from_result(epsilon_of_matrix(&matrix)),
        matrix: matrix.to_rows(),
        excluded,
    })
}

impl Report for InspectReport {
    fn tables(&self) -> Vec<Table> {
        let m = self.matrix.len();
        let header: Vec<String> = std::iter::once("row".to_string()).chain((0..m).map(|j| format!("col{j}"))).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = Table::new("matrix", &header);
        for (i, row) in self.matrix.iter().enumerate() {
            t.push(std::iter::once(i.to_string()).chain(row.iter().map(|&v| num(v))).collect());
        }
        let mut meta = Table::new("mechanism", &["key", "value"]);
        meta.push(vec!["label".into(), self.label.clone()]);
        meta.push(vec!["determinant".into(), num(self.determinant)]);
        self.budget.push_rows(&mut meta);
        for e in &self.excluded {
            meta.push(vec!["excluded".into(), e.clone()]);
        }
        vec![t, meta]
    }

    fn pass(&self) -> bool {
        true
    }
}
