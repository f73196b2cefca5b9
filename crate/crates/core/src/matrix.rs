//! Row-stochastic perturbation kernels.
//!
//! Entry `(i, j)` is the probability that a participant whose true answer is
//! `i` reports `j`. Matrices built from a mechanism family carry a label
//! naming the family and its parameters, so numerical failures downstream
//! (e.g. a singular kernel) can say which parameter caused them.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for matrices constructed from mechanism parameters.
pub const CONSTRUCTED_TOLERANCE: f64 = 1e-12;
/// Row-sum tolerance for user-supplied matrices (decimal text input).
pub const USER_TOLERANCE: f64 = 1e-9;
/// Absolute determinant threshold below which a kernel is treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

/// An `m × m` row-stochastic matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    m: usize,
    entries: Vec<f64>,
    label: String,
}

impl ProbabilityMatrix {
    /// Validates `rows` against the user tolerance and labels the result "custom".
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(rows, USER_TOLERANCE, "custom".to_string())
    }

    pub(crate) fn constructed(rows: Vec<Vec<f64>>, label: String) -> Result<Self> {
        Self::with_tolerance(rows, CONSTRUCTED_TOLERANCE, label)
    }

    pub fn with_tolerance(rows: Vec<Vec<f64>>, tolerance: f64, label: String) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::TooFewAnswers(m));
        }
        let mut entries = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::NotSquare { row: i, len: row.len(), expected: m });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidEntry { row: i, col: j, value: v });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tolerance || !sum.is_finite() {
                return Err(Error::NotRowStochastic { row: i, sum, tolerance });
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { m, entries, label })
    }

    pub fn identity(m: usize) -> Result<Self> {
        let rows = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::constructed(rows, format!("identity({m})"))
    }

    /// Number of answers.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.m)
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.m, &self.entries)
    }

    pub fn determinant(&self) -> f64 {
        self.to_nalgebra().determinant()
    }

    /// Row-major inverse. Fails when `|det| < 1e-10`.
    pub fn inverse(&self) -> Result<Vec<f64>> {
        let det = self.determinant();
        if !(det.abs() >= SINGULAR_TOLERANCE) {
            return Err(Error::SingularMatrix { mechanism: self.label.clone(), det: det.abs() });
        }
        let inv = self
            .to_nalgebra()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix { mechanism: self.label.clone(), det: det.abs() })?;
        let mut out = Vec::with_capacity(self.m * self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                out.push(inv[(i, j)]);
            }
        }
        Ok(out)
    }

    /// Left-multiplies a row vector: `v P`.
    pub fn left_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: v.len() });
        }
        let mut out = vec![0.0; self.m];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += vi * p;
            }
        }
        Ok(out)
    }

    /// Max absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &ProbabilityMatrix) -> f64 {
        if self.m != other.m {
            return f64::INFINITY;
        }
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// CSV export: `m` lines of `m` comma-separated decimals, no header.
    ///
    /// Values use the shortest representation that parses back to the same
    /// `f64`, so export followed by [`ProbabilityMatrix::from_csv`] is exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV export format. Blank lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|field| {
                    let field = field.trim();
                    field.parse::<f64>().map_err(|e| Error::Parse { line: idx + 1, message: format!("`{field}`: {e}") })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

impl fmt::Display for ProbabilityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.label)?;
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>10.6}")).collect();
            writeln!(f, "  [{}]", cells.join(" "))?;
        }
        Ok(())
    }
}
