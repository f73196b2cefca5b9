//! Randomized-response mechanism families and the perturbation step.
//!
//! Every family is described by a [`MechanismSpec`] and materialised as a
//! [`ProbabilityMatrix`]. Parameters sitting on a value that makes the
//! matching estimator undefined (for instance `p = 1/3` for three-answer
//! EWRR) are accepted here and reported by [`MechanismSpec::excluded_values`];
//! perturbation is still well defined, only estimation is blocked.

use std::fmt;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::matrix::ProbabilityMatrix;
use crate::sampling::multinomial;
use crate::vectors::{CountVector, ProportionRole, ProportionVector};

/// Tolerance used to decide that a parameter sits on an excluded value.
pub const EXCLUDED_TOLERANCE: f64 = 1e-12;

/// A mechanism family and its parameters.
///
/// Serialises to a flat key-value table tagged by `family`, e.g.
///
/// ```toml
/// family = "ewrr"
/// p = 0.8
/// n = 3
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    /// Two-answer Warner response: truth with probability `p`.
    Warner { p: f64 },
    /// Generalized randomized response over `m` answers.
    Grr { p: f64, m: usize },
    /// Extended Warner response over `n` answers: diagonal `p`,
    /// off-diagonal `(1-p)/(n-1)`.
    Ewrr { p: f64, n: usize },
    /// Three answers; answer 0 kept with `p1`, answers 1 and 2 kept with `p2`,
    /// lies uniform.
    Rr3Dagger { p1: f64, p2: f64 },
    /// Three answers; rows 1 and 2 move to answer 0 with `1-p1`, keep with
    /// `p1*p2`, swap with `p1*(1-p2)`.
    Rr3DoubleDagger { p1: f64, p2: f64 },
    /// Three answers; rows 1 and 2 move to answer 0 with `1-p2`, keep with
    /// `p2*q`, swap with `p2*(1-q)`.
    Rr3Club { p1: f64, p2: f64, q: f64 },
    /// A user-supplied kernel.
    Custom { rows: Vec<Vec<f64>> },
}

/// A parameter value at which the family's estimator is undefined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedValue {
    /// Human-readable condition, e.g. `p = 1/3`.
    pub condition: String,
}

impl MechanismSpec {
    /// Number of answers.
    pub fn answers(&self) -> usize {
        match self {
            Self::Warner { .. } => 2,
            Self::Grr { m, .. } => *m,
            Self::Ewrr { n, .. } => *n,
            Self::Rr3Dagger { .. } | Self::Rr3DoubleDagger { .. } | Self::Rr3Club { .. } => 3,
            Self::Custom { rows } => rows.len(),
        }
    }

    /// Checks parameter ranges and returns any excluded-value flags.
    pub fn validate(&self) -> Result<Vec<ExcludedValue>> {
        let mut flags = Vec::new();
        let mut flag_if = |hit: bool, condition: String| {
            if hit {
                flags.push(ExcludedValue { condition });
            }
        };
        let near = |a: f64, b: f64| (a - b).abs() <= EXCLUDED_TOLERANCE;
        match *self {
            Self::Warner { p } => {
                check_probability("p", p)?;
                flag_if(near(p, 0.5), format!("p = 1/2 (got {p})"));
            }
            Self::Grr { p, m: n } | Self::Ewrr { p, n } => {
                check_probability("p", p)?;
                if n < 2 {
                    return Err(Error::TooFewAnswers(n));
                }
                flag_if(near(p * n as f64, 1.0), format!("p = 1/{n} (got {p})"));
            }
            Self::Rr3Dagger { p1, p2 } => {
                check_probability("p1", p1)?;
                check_probability("p2", p2)?;
                flag_if(near(p2 + 2.0 * p1, 1.0), format!("p2 + 2 p1 - 1 = 0 (p1 = {p1}, p2 = {p2})"));
                flag_if(near(3.0 * p2, 1.0), format!("p2 = 1/3 (got {p2})"));
            }
            Self::Rr3DoubleDagger { p1, p2 } => {
                check_probability("p1", p1)?;
                check_probability("p2", p2)?;
                flag_if(near(p1, 0.5), format!("p1 = 1/2 (got {p1})"));
                flag_if(near(p1 * p2, 0.5), format!("p1 p2 = 1/2 (p1 = {p1}, p2 = {p2})"));
            }
            Self::Rr3Club { p1, p2, q } => {
                check_probability("p1", p1)?;
                check_probability("p2", p2)?;
                check_probability("q", q)?;
                flag_if(near(p1 + p2, 1.0), format!("p1 + p2 - 1 = 0 (p1 = {p1}, p2 = {p2})"));
                flag_if(near(q, 0.5), format!("q = 1/2 (got {q})"));
            }
            Self::Custom { ref rows } => {
                let m = ProbabilityMatrix::from_rows(rows.clone())?;
                let det = m.determinant();
                flag_if(
                    det.abs() < crate::matrix::SINGULAR_TOLERANCE,
                    format!("singular kernel (|det| = {:e})", det.abs()),
                );
            }
        }
        Ok(flags)
    }

    /// Errors unless the spec is valid and free of excluded values.
    pub fn validate_for_estimation(&self) -> Result<()> {
        let flags = self.validate()?;
        match flags.first() {
            None => Ok(()),
            Some(flag) => Err(Error::ExcludedParameter(format!("{self}: {}", flag.condition))),
        }
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("mechanism spec always serialises")
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

impl fmt::Display for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Warner { p } => write!(f, "warner(p={p})"),
            Self::Grr { p, m } => write!(f, "grr(p={p}, m={m})"),
            Self::Ewrr { p, n } => write!(f, "ewrr(p={p}, n={n})"),
            Self::Rr3Dagger { p1, p2 } => write!(f, "rr3_dagger(p1={p1}, p2={p2})"),
            Self::Rr3DoubleDagger { p1, p2 } => write!(f, "rr3_double_dagger(p1={p1}, p2={p2})"),
            Self::Rr3Club { p1, p2, q } => write!(f, "rr3_club(p1={p1}, p2={p2}, q={q})"),
            Self::Custom { rows } => write!(f, "custom({}x{})", rows.len(), rows.len()),
        }
    }
}

fn symmetric_rows(p: f64, n: usize) -> Vec<Vec<f64>> {
    let off = (1.0 - p) / (n as f64 - 1.0);
    (0..n).map(|i| (0..n).map(|j| if i == j { p } else { off }).collect()).collect()
}

/// Materialises the probability matrix of `spec`.
///
/// Excluded values are logged at warning level but do not fail.
pub fn build_matrix(spec: &MechanismSpec) -> Result<ProbabilityMatrix> {
    let flags = spec.validate()?;
    for flag in &flags {
        warn!("{spec}: estimator undefined at {}", flag.condition);
    }
    let rows = match *spec {
        MechanismSpec::Warner { p } => symmetric_rows(p, 2),
        MechanismSpec::Grr { p, m } => symmetric_rows(p, m),
        MechanismSpec::Ewrr { p, n } => symmetric_rows(p, n),
        MechanismSpec::Rr3Dagger { p1, p2 } => vec![
            vec![p1, (1.0 - p1) / 2.0, (1.0 - p1) / 2.0],
            vec![(1.0 - p2) / 2.0, p2, (1.0 - p2) / 2.0],
            vec![(1.0 - p2) / 2.0, (1.0 - p2) / 2.0, p2],
        ],
        MechanismSpec::Rr3DoubleDagger { p1, p2 } => vec![
            vec![p1, (1.0 - p1) / 2.0, (1.0 - p1) / 2.0],
            vec![1.0 - p1, p1 * p2, p1 * (1.0 - p2)],
            vec![1.0 - p1, p1 * (1.0 - p2), p1 * p2],
        ],
        MechanismSpec::Rr3Club { p1, p2, q } => vec![
            vec![p1, (1.0 - p1) / 2.0, (1.0 - p1) / 2.0],
            vec![1.0 - p2, p2 * q, p2 * (1.0 - q)],
            vec![1.0 - p2, p2 * (1.0 - q), p2 * q],
        ],
        MechanismSpec::Custom { ref rows } => {
            return ProbabilityMatrix::with_tolerance(rows.clone(), crate::matrix::USER_TOLERANCE, spec.to_string())
        }
    };
    ProbabilityMatrix::constructed(rows, spec.to_string())
}

/// Index of an answer, `0..m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AnswerIndex(usize);

impl AnswerIndex {
    pub fn new(value: usize, m: usize) -> Result<Self> {
        if value < m {
            Ok(Self(value))
        } else {
            Err(Error::AnswerOutOfRange { answer: value, m })
        }
    }

    pub fn value(self) -> usize {
        self.0
    }
}

/// Samples index `j` with probability `row[j]` from a single uniform draw.
pub(crate) fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last_positive = j;
            acc += p;
            if u < acc {
                return j;
            }
        }
    }
    // Rounding left `u` above the cumulative sum.
    last_positive
}

/// Perturbs one answer through `matrix` (inverse CDF, one uniform draw).
pub fn perturb<R: Rng + ?Sized>(answer: AnswerIndex, matrix: &ProbabilityMatrix, rng: &mut R) -> Result<AnswerIndex> {
    let i = answer.value();
    if i >= matrix.m() {
        return Err(Error::AnswerOutOfRange { answer: i, m: matrix.m() });
    }
    Ok(AnswerIndex(sample_row(matrix.row(i), rng)))
}

/// Expected report distribution `π̃ = π P`.
pub fn response_distribution(
    true_proportions: &ProportionVector,
    matrix: &ProbabilityMatrix,
) -> Result<ProportionVector> {
    let out = matrix.left_mul(true_proportions.values())?;
    Ok(ProportionVector::unchecked(out, ProportionRole::Observed))
}

/// Perturbs a whole population given its true per-answer counts.
///
/// Participants with true answer `i` report according to row `i`, so the
/// reports of that group are `Multinomial(N_i, P_i)`; the result is the sum
/// over groups. This has exactly the distribution of perturbing every
/// participant individually.
pub fn perturb_counts<R: Rng + ?Sized>(
    true_counts: &[u64],
    matrix: &ProbabilityMatrix,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if true_counts.len() != matrix.m() {
        return Err(Error::DimensionMismatch { expected: matrix.m(), got: true_counts.len() });
    }
    let mut observed = vec![0u64; matrix.m()];
    for (i, &n_i) in true_counts.iter().enumerate() {
        let group = multinomial(n_i, matrix.row(i), rng)?;
        for (o, g) in observed.iter_mut().zip(group) {
            *o += g;
        }
    }
    Ok(observed)
}

/// Samples a population of `n` true answers from `π` and perturbs it.
pub fn simulate_counts<R: Rng + ?Sized>(
    n: u64,
    true_proportions: &ProportionVector,
    matrix: &ProbabilityMatrix,
    rng: &mut R,
) -> Result<CountVector> {
    let truth = multinomial(n, true_proportions.values(), rng)?;
    CountVector::new(perturb_counts(&truth, matrix, rng)?)
}

/// Calibrated two-answer "yes" fraction `(f - (1-p)) / (p - (1-p))`.
///
/// The result is returned raw and may leave `[0, 1]` on noisy input.
pub fn calibrate_two_element(observed_yes_fraction: f64, p: f64) -> Result<f64> {
    check_probability("p", p)?;
    let denom = p - (1.0 - p);
    if denom.abs() <= EXCLUDED_TOLERANCE {
        return Err(Error::ExcludedParameter(format!("p = 1/2 (got {p})")));
    }
    Ok((observed_yes_fraction - (1.0 - p)) / denom)
}
