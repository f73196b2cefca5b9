//! Answer counts and proportion vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on proportion vectors.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Per-answer counts `(N_0, N_1, ...)` of observed reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct CountVector {
    counts: Vec<u64>,
    total: u64,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidCounts(format!("need at least 2 categories, got {}", counts.len())));
        }
        let total = counts
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| Error::InvalidCounts("total overflows u64".into()))?;
        if total == 0 {
            return Err(Error::InvalidCounts("total must be at least 1".into()));
        }
        Ok(Self { counts, total })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Observed proportions `N_i / N`.
    pub fn observed(&self) -> ProportionVector {
        let n = self.total as f64;
        ProportionVector { values: self.counts.iter().map(|&c| c as f64 / n).collect(), role: ProportionRole::Observed }
    }
}

impl TryFrom<Vec<u64>> for CountVector {
    type Error = Error;

    fn try_from(value: Vec<u64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<CountVector> for Vec<u64> {
    fn from(value: CountVector) -> Self {
        value.counts
    }
}

/// Which quantity a [`ProportionVector`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProportionRole {
    /// True population proportions π.
    True,
    /// Proportions of perturbed reports π̃.
    Observed,
    /// Estimates π̂; entries may leave `[0, 1]` on noisy input.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionVector {
    values: Vec<f64>,
    role: ProportionRole,
}

impl ProportionVector {
    /// True proportions: entries in `[0, 1]` summing to one.
    pub fn truth(values: Vec<f64>) -> Result<Self> {
        Self::checked(values, ProportionRole::True)
    }

    /// Observed proportions: entries in `[0, 1]` summing to one.
    pub fn observed(values: Vec<f64>) -> Result<Self> {
        Self::checked(values, ProportionRole::Observed)
    }

    /// Estimated proportions. Only finiteness is checked; the sum-to-one
    /// property is a post-condition of the estimators, not of the input.
    pub fn estimated(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProportions("non-finite estimate".into()));
        }
        Ok(Self { values, role: ProportionRole::Estimated })
    }

    fn checked(values: Vec<f64>, role: ProportionRole) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidProportions(format!("need at least 2 entries, got {}", values.len())));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -SIMPLEX_TOLERANCE || **v > 1.0 + SIMPLEX_TOLERANCE)
        {
            return Err(Error::InvalidProportions(format!("entry {i} = {v} is not in [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidProportions(format!("entries sum to {sum}")));
        }
        Ok(Self { values, role })
    }

    pub(crate) fn unchecked(values: Vec<f64>, role: ProportionRole) -> Self {
        Self { values, role }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn role(&self) -> ProportionRole {
        self.role
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// True if any entry lies outside `[0, 1]`.
    pub fn outside_simplex(&self) -> bool {
        self.values.iter().any(|v| !(0.0..=1.0).contains(v))
    }
}
