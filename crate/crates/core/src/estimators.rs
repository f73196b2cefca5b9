//! Frequency estimators for randomized-response reports.
//!
//! Three families are provided:
//!
//! - [`inversion_estimate`]: `π̂ = π̃ P⁻¹` for any invertible kernel.
//! - Closed-form maximum-likelihood estimators for EWRR and the three-answer
//!   variants, with their analytic variances.
//! - [`mle_numeric`]: a Newton solver for the multinomial likelihood of an
//!   arbitrary kernel, falling back to EM when the maximum sits on the
//!   simplex boundary.
//!
//! Estimates are never projected onto the simplex; doing so would bias them.
//! Entries outside `[0, 1]` are returned as-is and flagged.
//!
//! Every closed form here is affine in the observed frequencies
//! `f_j = N_j / N`, so its variance is `(Σ c_j² π̃_j − (Σ c_j π̃_j)²) / N`
//! for coefficients `c`. [`Affine`] carries that representation and is used
//! both to evaluate plug-in variances and to audit the printed π̂₁ forms for
//! bias.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::matrix::ProbabilityMatrix;
use crate::mechanisms::{build_matrix, AnswerIndex, MechanismSpec};
use crate::vectors::{CountVector, ProportionRole, ProportionVector};

/// Tolerance for deciding that a printed closed form is biased.
pub const BIAS_TOLERANCE: f64 = 1e-9;

/// Which estimator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Inversion,
    Ewrr3,
    Ewrrn,
    Rr3Dagger,
    Rr3DoubleDagger,
    Rr3Club,
    Numeric,
}

impl EstimatorId {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Inversion => "inversion",
            Self::Ewrr3 => "ewrr3",
            Self::Ewrrn => "ewrrn",
            Self::Rr3Dagger => "rr3_dagger",
            Self::Rr3DoubleDagger => "rr3_double_dagger",
            Self::Rr3Club => "rr3_club",
            Self::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateFlags {
    /// The estimate lies outside `[0, 1]`.
    pub outside_unit_interval: bool,
    /// The family's printed closed form for this coordinate is biased.
    pub printed_form_biased: bool,
    /// The value comes from matrix inversion instead of the family's
    /// closed form.
    pub inversion_fallback: bool,
}

impl EstimateFlags {
    pub fn labels(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.outside_unit_interval {
            out.push("outside_unit_interval");
        }
        if self.printed_form_biased {
            out.push("printed_form_biased");
        }
        if self.inversion_fallback {
            out.push("inversion_fallback");
        }
        out
    }
}

/// A point estimate with its analytic variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithVariance {
    pub estimate: f64,
    /// Plug-in analytic variance, clamped at 0.
    pub variance: f64,
    pub estimator: EstimatorId,
    pub flags: EstimateFlags,
}

impl EstimateWithVariance {
    fn new(estimate: f64, variance: f64, estimator: EstimatorId) -> Self {
        Self {
            estimate,
            variance: variance.max(0.0),
            estimator,
            flags: EstimateFlags {
                outside_unit_interval: !(0.0..=1.0).contains(&estimate),
                ..EstimateFlags::default()
            },
        }
    }

    pub fn std_error(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Estimates of `π₀` and `π₁` for a three-answer mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub pi0: EstimateWithVariance,
    pub pi1: EstimateWithVariance,
    /// The family's printed π̂₁ evaluated on the same counts, kept for audit
    /// even when it is not the reported value.
    pub printed_pi1: f64,
}

impl PairEstimate {
    /// `π̂₂ = 1 − π̂₀ − π̂₁`.
    pub fn pi2(&self) -> f64 {
        1.0 - self.pi0.estimate - self.pi1.estimate
    }

    pub fn values(&self) -> [f64; 3] {
        [self.pi0.estimate, self.pi1.estimate, self.pi2()]
    }
}

/// An estimator of the form `constant + Σ_j coeffs[j] · f_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl Affine {
    pub fn eval(&self, freqs: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(freqs).map(|(c, f)| c * f).sum::<f64>()
    }

    /// Variance when counts are `Multinomial(n, π̃)`.
    pub fn variance(&self, response: &[f64], n: f64) -> f64 {
        let m1: f64 = self.coeffs.iter().zip(response).map(|(c, f)| c * f).sum();
        let m2: f64 = self.coeffs.iter().zip(response).map(|(c, f)| c * c * f).sum();
        ((m2 - m1 * m1) / n).max(0.0)
    }
}

fn check_len(counts: &CountVector, m: usize) -> Result<()> {
    if counts.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: counts.len() });
    }
    Ok(())
}

fn check_n(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidCounts("N must be at least 1".into()));
    }
    Ok(n as f64)
}

/// `π̂ = π̃ P⁻¹`.
pub fn inversion_estimate(observed: &ProportionVector, matrix: &ProbabilityMatrix) -> Result<ProportionVector> {
    let m = matrix.m();
    if observed.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: observed.len() });
    }
    let inv = matrix.inverse()?;
    let f = observed.values();
    let out = (0..m).map(|i| (0..m).map(|j| f[j] * inv[j * m + i]).sum()).collect();
    Ok(ProportionVector::unchecked(out, ProportionRole::Estimated))
}

/// The affine form of coordinate `answer` of the inversion estimator.
pub fn inversion_affine(matrix: &ProbabilityMatrix, answer: usize) -> Result<Affine> {
    let m = matrix.m();
    if answer >= m {
        return Err(Error::AnswerOutOfRange { answer, m });
    }
    let inv = matrix.inverse()?;
    Ok(Affine { constant: 0.0, coeffs: (0..m).map(|j| inv[j * m + answer]).collect() })
}

/// Inversion estimate with plug-in variances, one entry per answer.
pub fn inversion_with_variance(counts: &CountVector, matrix: &ProbabilityMatrix) -> Result<Vec<EstimateWithVariance>> {
    check_len(counts, matrix.m())?;
    let f = counts.observed();
    let n = counts.total() as f64;
    (0..matrix.m())
        .map(|i| {
            let form = inversion_affine(matrix, i)?;
            Ok(EstimateWithVariance::new(form.eval(f.values()), form.variance(f.values(), n), EstimatorId::Inversion))
        })
        .collect()
}

/// Exact variance of every inversion coordinate at true proportions `π`.
pub fn inversion_variance(true_proportions: &ProportionVector, matrix: &ProbabilityMatrix, n: u64) -> Result<Vec<f64>> {
    let n = check_n(n)?;
    let response = matrix.left_mul(true_proportions.values())?;
    (0..matrix.m()).map(|i| Ok(inversion_affine(matrix, i)?.variance(&response, n))).collect()
}

/// `Var(N_i) = N π̃_i (1 − π̃_i)` with `π̃ = πP`.
pub fn count_variance(
    true_proportions: &ProportionVector,
    matrix: &ProbabilityMatrix,
    answer: AnswerIndex,
    n: u64,
) -> Result<f64> {
    let response = matrix.left_mul(true_proportions.values())?;
    let i = answer.value();
    if i >= response.len() {
        return Err(Error::AnswerOutOfRange { answer: i, m: response.len() });
    }
    let r = response[i];
    Ok(n as f64 * r * (1.0 - r))
}

// ---------------------------------------------------------------------------
// EWRR

fn ewrr_affine(p: f64, n: usize, answer: usize) -> Affine {
    let k = n as f64 - 1.0;
    let denom = 1.0 - n as f64 * p;
    let mut coeffs = vec![0.0; n];
    coeffs[answer] = (-(1.0 - p) * k - k * p) / denom;
    Affine { constant: (1.0 - p) / denom, coeffs }
}

/// Three-answer EWRR: `π̂_i = ((1−p)(N−2N_i) − 2pN_i) / ((1−3p)N)`.
pub fn mle_ewrr3(counts: &CountVector, p: f64) -> Result<PairEstimate> {
    MechanismSpec::Ewrr { p, n: 3 }.validate_for_estimation()?;
    check_len(counts, 3)?;
    let n = counts.total() as f64;
    let est = |i: usize| {
        let ni = counts.get(i) as f64;
        ((1.0 - p) * (n - 2.0 * ni) - 2.0 * p * ni) / ((1.0 - 3.0 * p) * n)
    };
    let pi0 = est(0);
    let pi1 = est(1);
    Ok(PairEstimate {
        pi0: EstimateWithVariance::new(pi0, var_ewrr3_unchecked(pi0, p, n), EstimatorId::Ewrr3),
        pi1: EstimateWithVariance::new(pi1, var_ewrr3_unchecked(pi1, p, n), EstimatorId::Ewrr3),
        printed_pi1: pi1,
    })
}

fn var_ewrr3_unchecked(pi: f64, p: f64, n: f64) -> f64 {
    let d = 3.0 * p - 1.0;
    (1.0 - p * p + 2.0 * p * d * pi - d * d * pi * pi) / (d * d * n)
}

/// `Var(π̂_i)` for three-answer EWRR at true proportion `pi`.
pub fn var_ewrr3(pi: f64, p: f64, n: u64) -> Result<f64> {
    MechanismSpec::Ewrr { p, n: 3 }.validate_for_estimation()?;
    check_probability("pi", pi)?;
    Ok(var_ewrr3_unchecked(pi, p, check_n(n)?))
}

/// n-answer EWRR: `π̂_i = ((1−p)(N−(n−1)N_i) − (n−1)pN_i) / ((1−np)N)` for
/// every answer. The entries sum to one identically.
pub fn mle_ewrrn(counts: &CountVector, p: f64, n: usize) -> Result<Vec<EstimateWithVariance>> {
    MechanismSpec::Ewrr { p, n }.validate_for_estimation()?;
    check_len(counts, n)?;
    let total = counts.total() as f64;
    let k = n as f64 - 1.0;
    Ok((0..n)
        .map(|i| {
            let ni = counts.get(i) as f64;
            let est = ((1.0 - p) * (total - k * ni) - k * p * ni) / ((1.0 - n as f64 * p) * total);
            EstimateWithVariance::new(est, var_ewrrn_unchecked(est, p, n, total), EstimatorId::Ewrrn)
        })
        .collect())
}

fn var_ewrrn_unchecked(pi: f64, p: f64, n: usize, total: f64) -> f64 {
    let nf = n as f64;
    let d = nf * p - 1.0;
    (1.0 - p + d * pi) * (nf - 2.0 + p - d * pi) / (d * d * total)
}

/// `Var(π̂_i)` for n-answer EWRR at true proportion `pi`.
///
/// The second factor is `(n − 2 + p) − (np − 1)π`. It reduces to
/// [`var_ewrr3`] at `n = 3`; see [`var_ewrrn_printed`] for the variant
/// whose second factor is `p − (np − 1)π`, which only holds at `n = 2`.
pub fn var_ewrrn(pi: f64, p: f64, n: usize, total: u64) -> Result<f64> {
    MechanismSpec::Ewrr { p, n }.validate_for_estimation()?;
    check_probability("pi", pi)?;
    Ok(var_ewrrn_unchecked(pi, p, n, check_n(total)?))
}

/// `[1 − p + (np−1)π][p − (np−1)π] / ((np−1)² N)`, kept for comparison.
/// Underestimates the true variance for `n > 2` and can go negative.
pub fn var_ewrrn_printed(pi: f64, p: f64, n: usize, total: u64) -> Result<f64> {
    MechanismSpec::Ewrr { p, n }.validate_for_estimation()?;
    check_probability("pi", pi)?;
    let total = check_n(total)?;
    let d = n as f64 * p - 1.0;
    Ok((1.0 - p + d * pi) * (p - d * pi) / (d * d * total))
}

// ---------------------------------------------------------------------------
// Three-answer variants

/// The printed closed form for π̂₀ of a three-answer family, as an affine
/// function of the observed frequencies.
pub fn pi0_affine(spec: &MechanismSpec) -> Result<Affine> {
    let (constant, c0) = match *spec {
        MechanismSpec::Ewrr { p, n: 3 } => return Ok(ewrr_affine(p, 3, 0)),
        MechanismSpec::Rr3Dagger { p1, p2 } => {
            let d = p2 + 2.0 * p1 - 1.0;
            ((p2 - 1.0) / d, 2.0 / d)
        }
        MechanismSpec::Rr3DoubleDagger { p1, .. } => {
            let d = 2.0 * p1 - 1.0;
            ((p1 - 1.0) / d, 1.0 / d)
        }
        MechanismSpec::Rr3Club { p1, p2, .. } => {
            let d = p2 + p1 - 1.0;
            ((p2 - 1.0) / d, 1.0 / d)
        }
        _ => return Err(Error::InvalidProtocol(format!("{spec} has no three-answer closed form"))),
    };
    Ok(Affine { constant, coeffs: vec![c0, 0.0, 0.0] })
}

/// The printed closed form for π̂₁, as an affine function of the observed
/// frequencies. Use [`printed_pi1_bias`] before trusting it.
pub fn printed_pi1_affine(spec: &MechanismSpec) -> Result<Affine> {
    // All three printed forms share the shape
    //   a − b − f0/c + (2 f1 + f0)/e = (a − b) + f0 (1/e − 1/c) + f1 (2/e).
    let (a, b, c, e) = match *spec {
        MechanismSpec::Ewrr { p, n: 3 } => return Ok(ewrr_affine(p, 3, 1)),
        MechanismSpec::Rr3Dagger { p1, p2 } => {
            let d = p2 + 2.0 * p1 - 1.0;
            let g = 3.0 * p2 - 1.0;
            ((p1 - 1.0) / d, 1.0 / g, d, g)
        }
        MechanismSpec::Rr3DoubleDagger { p1, p2 } => {
            let d = 2.0 * p1 - 1.0;
            let g = 2.0 * p1 * p2 - 1.0;
            (p1 / d, 1.0 / g, d, g)
        }
        MechanismSpec::Rr3Club { p1, p2, q } => {
            let d = p2 + p1 - 1.0;
            let g = p2 * (2.0 * q - 1.0);
            (p1 / (2.0 * d), 1.0 / (2.0 * g), 2.0 * d, 2.0 * g)
        }
        _ => return Err(Error::InvalidProtocol(format!("{spec} has no three-answer closed form"))),
    };
    Ok(Affine { constant: a - b, coeffs: vec![1.0 / e - 1.0 / c, 2.0 / e, 0.0] })
}

/// True proportions at which printed forms are audited.
const BIAS_PROBES: [[f64; 3]; 4] =
    [[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.4, 0.35, 0.25], [0.1, 0.7, 0.2], [0.6, 0.05, 0.35]];

/// Largest `|E[π̂₁] − π₁|` of the printed π̂₁ form over a set of probe
/// proportions. Exact: the form is affine, so its expectation is the form
/// evaluated at `π̃ = πP`.
pub fn printed_pi1_bias(spec: &MechanismSpec) -> Result<f64> {
    let matrix = build_matrix(spec)?;
    let form = printed_pi1_affine(spec)?;
    let mut worst: f64 = 0.0;
    for probe in BIAS_PROBES {
        let response = matrix.left_mul(&probe)?;
        worst = worst.max((form.eval(&response) - probe[1]).abs());
    }
    Ok(worst)
}

/// Affine forms of the reported `(π̂₀, π̂₁)` for a three-answer family:
/// the closed form for π̂₀, and the printed π̂₁ unless it is biased, in which
/// case the inversion coordinate. The flag reports the fallback.
pub fn reported_pair_forms(spec: &MechanismSpec) -> Result<(Affine, Affine, bool)> {
    spec.validate_for_estimation()?;
    let form0 = pi0_affine(spec)?;
    if printed_pi1_bias(spec)? > BIAS_TOLERANCE {
        Ok((form0, inversion_affine(&build_matrix(spec)?, 1)?, true))
    } else {
        Ok((form0, printed_pi1_affine(spec)?, false))
    }
}

fn pair_estimate(spec: &MechanismSpec, id: EstimatorId, counts: &CountVector) -> Result<PairEstimate> {
    spec.validate_for_estimation()?;
    check_len(counts, 3)?;
    let f = counts.observed();
    let n = counts.total() as f64;

    let form0 = pi0_affine(spec)?;
    let pi0 = EstimateWithVariance::new(form0.eval(f.values()), form0.variance(f.values(), n), id);

    let printed = printed_pi1_affine(spec)?;
    let printed_pi1 = printed.eval(f.values());
    let biased = printed_pi1_bias(spec)? > BIAS_TOLERANCE;
    let pi1 = if biased {
        let form = inversion_affine(&build_matrix(spec)?, 1)?;
        let mut est = EstimateWithVariance::new(form.eval(f.values()), form.variance(f.values(), n), id);
        est.flags.printed_form_biased = true;
        est.flags.inversion_fallback = true;
        est
    } else {
        EstimateWithVariance::new(printed_pi1, printed.variance(f.values(), n), id)
    };
    Ok(PairEstimate { pi0, pi1, printed_pi1 })
}

/// `RR3Dagger`. π̂₀ is the closed form; π̂₁ falls back to inversion because
/// the printed π̂₁ form is biased (it is off by `−1/(p₂+2p₁−1)`).
pub fn mle_rr3dagger(counts: &CountVector, p1: f64, p2: f64) -> Result<PairEstimate> {
    pair_estimate(&MechanismSpec::Rr3Dagger { p1, p2 }, EstimatorId::Rr3Dagger, counts)
}

/// `RR3DoubleDagger`. π̂₀ is the closed form; π̂₁ falls back to inversion
/// because the printed π̂₁ form is biased.
pub fn mle_rr3doubledagger(counts: &CountVector, p1: f64, p2: f64) -> Result<PairEstimate> {
    pair_estimate(&MechanismSpec::Rr3DoubleDagger { p1, p2 }, EstimatorId::Rr3DoubleDagger, counts)
}

/// `RR3Club`. Both π̂₀ and π̂₁ use the closed forms.
pub fn mle_rr3club(counts: &CountVector, p1: f64, p2: f64, q: f64) -> Result<PairEstimate> {
    pair_estimate(&MechanismSpec::Rr3Club { p1, p2, q }, EstimatorId::Rr3Club, counts)
}

/// `Var(π̂₀)` for `RR3Dagger` at true `π₀`.
pub fn var_rr3dagger(pi0: f64, p1: f64, p2: f64, n: u64) -> Result<f64> {
    MechanismSpec::Rr3Dagger { p1, p2 }.validate_for_estimation()?;
    check_probability("pi0", pi0)?;
    Ok(var_rr3dagger_unchecked(pi0, p1, p2, check_n(n)?))
}

pub(crate) fn var_rr3dagger_unchecked(pi0: f64, p1: f64, p2: f64, n: f64) -> f64 {
    let d = 2.0 * p1 + p2 - 1.0;
    ((1.0 - p2 * p2) + 2.0 * p2 * d * pi0 - d * d * pi0 * pi0) / (d * d * n)
}

/// `Var(π̂₀)` for `RR3DoubleDagger` at true `π₀`.
pub fn var_rr3doubledagger(pi0: f64, p1: f64, p2: f64, n: u64) -> Result<f64> {
    MechanismSpec::Rr3DoubleDagger { p1, p2 }.validate_for_estimation()?;
    check_probability("pi0", pi0)?;
    let n = check_n(n)?;
    let d = 2.0 * p1 - 1.0;
    Ok((p1 * (1.0 - p1) + d * d * pi0 - d * d * pi0 * pi0) / (d * d * n))
}

/// `Var(π̂₀)` for `RR3Club` at true `π₀`.
pub fn var_rr3club(pi0: f64, p1: f64, p2: f64, q: f64, n: u64) -> Result<f64> {
    MechanismSpec::Rr3Club { p1, p2, q }.validate_for_estimation()?;
    check_probability("pi0", pi0)?;
    let n = check_n(n)?;
    let d = p1 + p2 - 1.0;
    Ok((p2 * (1.0 - p2) + (2.0 * p2 - 1.0) * d * pi0 - d * d * pi0 * pi0) / (d * d * n))
}

/// Dispatches to the closed-form estimator of a three-answer family.
pub fn closed_form_estimate(spec: &MechanismSpec, counts: &CountVector) -> Result<PairEstimate> {
    match *spec {
        MechanismSpec::Ewrr { p, n: 3 } => mle_ewrr3(counts, p),
        MechanismSpec::Rr3Dagger { p1, p2 } => mle_rr3dagger(counts, p1, p2),
        MechanismSpec::Rr3DoubleDagger { p1, p2 } => mle_rr3doubledagger(counts, p1, p2),
        MechanismSpec::Rr3Club { p1, p2, q } => mle_rr3club(counts, p1, p2, q),
        _ => Err(Error::InvalidProtocol(format!("{spec} has no three-answer closed form"))),
    }
}

/// Exact variance of the closed-form π̂₀ at true proportions `π`.
pub fn closed_form_pi0_variance(spec: &MechanismSpec, true_proportions: &ProportionVector, n: u64) -> Result<f64> {
    let pi0 = true_proportions.get(0);
    match *spec {
        MechanismSpec::Ewrr { p, n: 3 } => var_ewrr3(pi0, p, n),
        MechanismSpec::Rr3Dagger { p1, p2 } => var_rr3dagger(pi0, p1, p2, n),
        MechanismSpec::Rr3DoubleDagger { p1, p2 } => var_rr3doubledagger(pi0, p1, p2, n),
        MechanismSpec::Rr3Club { p1, p2, q } => var_rr3club(pi0, p1, p2, q, n),
        _ => Err(Error::InvalidProtocol(format!("{spec} has no three-answer closed form"))),
    }
}

// ---------------------------------------------------------------------------
// Numeric MLE

/// Score-norm tolerance, relative to `N`.
pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITERATIONS: usize = 100;
const EM_MAX_ITERATIONS: usize = 200_000;
const EM_TOLERANCE: f64 = 1e-13;
const INTERIOR_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    /// Newton converged to an interior stationary point.
    Newton,
    /// The maximum lies on the simplex boundary; EM found it.
    ExpectationMaximization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericMle {
    pub estimate: ProportionVector,
    pub iterations: usize,
    /// Score norm divided by `N` at the solution (free coordinates).
    pub score_norm: f64,
    pub log_likelihood: f64,
    pub path: SolverPath,
}

/// `Σ_j N_j ln π̃_j` with `π̃ = πP`.
pub fn log_likelihood(counts: &CountVector, matrix: &ProbabilityMatrix, pi: &[f64]) -> Result<f64> {
    check_len(counts, matrix.m())?;
    let response = matrix.left_mul(pi)?;
    let mut ll = 0.0;
    for (&n, &r) in counts.counts().iter().zip(&response) {
        if n > 0 {
            if r <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            ll += n as f64 * r.ln();
        }
    }
    Ok(ll)
}

/// Score and Hessian of the log-likelihood in the free coordinates
/// `π₀ … π_{m−2}` (the last coordinate is `1 − Σ`).
fn score_and_hessian(counts: &CountVector, matrix: &ProbabilityMatrix, pi: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let m = matrix.m();
    let k = m - 1;
    let response = matrix.left_mul(pi).expect("dimension checked by caller");
    let last = matrix.row(k);
    let mut score = DVector::zeros(k);
    let mut hess = DMatrix::zeros(k, k);
    for j in 0..m {
        let nj = counts.get(j) as f64;
        if nj == 0.0 {
            continue;
        }
        let r = response[j];
        let d: Vec<f64> = (0..k).map(|a| matrix.get(a, j) - last[j]).collect();
        for a in 0..k {
            score[a] += nj * d[a] / r;
            for b in 0..k {
                hess[(a, b)] -= nj * d[a] * d[b] / (r * r);
            }
        }
    }
    (score, hess)
}

/// Hessian of the log-likelihood in the free coordinates at `pi`.
pub fn log_likelihood_hessian(counts: &CountVector, matrix: &ProbabilityMatrix, pi: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_len(counts, matrix.m())?;
    if pi.len() != matrix.m() {
        return Err(Error::DimensionMismatch { expected: matrix.m(), got: pi.len() });
    }
    let (_, h) = score_and_hessian(counts, matrix, pi);
    Ok((0..h.nrows()).map(|a| (0..h.ncols()).map(|b| h[(a, b)]).collect()).collect())
}

fn project_interior(values: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = values.iter().map(|v| v.clamp(INTERIOR_MARGIN, 1.0)).collect();
    let sum: f64 = clamped.iter().sum();
    clamped.iter().map(|v| v / sum).collect()
}

fn in_simplex(pi: &[f64]) -> bool {
    pi.iter().all(|&v| v > 0.0)
}

/// Maximises the multinomial log-likelihood over the simplex.
pub fn mle_numeric(counts: &CountVector, matrix: &ProbabilityMatrix) -> Result<ProportionVector> {
    Ok(mle_numeric_detailed(counts, matrix)?.estimate)
}

/// [`mle_numeric`] with solver diagnostics.
///
/// Damped Newton on the free coordinates from the inversion estimate
/// projected into the interior. Steps are halved until the iterate stays
/// strictly inside the simplex and the likelihood does not decrease. When
/// Newton cannot make progress inside the simplex the maximum is on the
/// boundary, and EM (which preserves the simplex) takes over.
pub fn mle_numeric_detailed(counts: &CountVector, matrix: &ProbabilityMatrix) -> Result<NumericMle> {
    check_len(counts, matrix.m())?;
    let m = matrix.m();
    let k = m - 1;
    let n = counts.total() as f64;
    let start = inversion_estimate(&counts.observed(), matrix)?;
    let mut pi = project_interior(start.values());
    let mut ll = log_likelihood(counts, matrix, &pi)?;

    let mut stalled = false;
    for iteration in 0..NEWTON_MAX_ITERATIONS {
        let (score, hess) = score_and_hessian(counts, matrix, &pi);
        let norm = score.norm() / n;
        if norm < NEWTON_TOLERANCE {
            return Ok(NumericMle {
                estimate: ProportionVector::unchecked(pi, ProportionRole::Estimated),
                iterations: iteration,
                score_norm: norm,
                log_likelihood: ll,
                path: SolverPath::Newton,
            });
        }
        let Some(step) = (-hess).lu().solve(&score) else {
            stalled = true;
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let mut cand: Vec<f64> = pi.clone();
            for a in 0..k {
                cand[a] += t * step[a];
            }
            cand[k] = 1.0 - cand[..k].iter().sum::<f64>();
            if in_simplex(&cand) {
                let cand_ll = log_likelihood(counts, matrix, &cand)?;
                if cand_ll >= ll - 1e-12 * ll.abs() {
                    pi = cand;
                    ll = cand_ll;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || t < 1e-3 {
            // Steps that shrink this far mean the optimum is pinned against
            // the boundary.
            stalled = true;
            break;
        }
    }
    if !stalled {
        let (score, _) = score_and_hessian(counts, matrix, &pi);
        return Err(Error::NoConvergence { iterations: NEWTON_MAX_ITERATIONS, score_norm: score.norm() / n });
    }
    em(counts, matrix, pi)
}

fn em(counts: &CountVector, matrix: &ProbabilityMatrix, mut pi: Vec<f64>) -> Result<NumericMle> {
    let m = matrix.m();
    let n = counts.total() as f64;
    for iteration in 0..EM_MAX_ITERATIONS {
        let response = matrix.left_mul(&pi)?;
        let mut next = vec![0.0; m];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..m {
                let nj = counts.get(j) as f64;
                if nj > 0.0 && response[j] > 0.0 {
                    acc += nj * matrix.get(i, j) / response[j];
                }
            }
            *slot = pi[i] * acc / n;
        }
        let change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if change < EM_TOLERANCE {
            let ll = log_likelihood(counts, matrix, &pi)?;
            return Ok(NumericMle {
                estimate: ProportionVector::unchecked(pi, ProportionRole::Estimated),
                iterations: iteration + 1,
                score_norm: change,
                log_likelihood: ll,
                path: SolverPath::ExpectationMaximization,
            });
        }
    }
    Err(Error::NoConvergence { iterations: EM_MAX_ITERATIONS, score_norm: f64::NAN })
}

// ---------------------------------------------------------------------------
// Export

/// One row of an estimate export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: EstimatorId,
    pub parameters: String,
    pub answer: usize,
    pub estimate: f64,
    pub variance: f64,
    pub flags: Vec<String>,
}

impl EstimateRecord {
    pub fn new(parameters: &str, answer: usize, value: &EstimateWithVariance) -> Self {
        Self {
            estimator: value.estimator,
            parameters: parameters.to_string(),
            answer,
            estimate: value.estimate,
            variance: value.variance,
            flags: value.flags.labels().into_iter().map(String::from).collect(),
        }
    }
}

/// CSV with header `estimator,parameters,answer,estimate,variance,flags`.
/// Parameters are quoted; flags are `;`-separated.
pub fn records_to_csv(records: &[EstimateRecord]) -> String {
    let mut out = String::from("estimator,parameters,answer,estimate,variance,flags\n");
    for r in records {
        out.push_str(&format!(
            "{},\"{}\",{},{:?},{:?},{}\n",
            r.estimator.as_str(),
            r.parameters.replace('"', "\"\""),
            r.answer,
            r.estimate,
            r.variance,
            r.flags.join(";")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(v: &[u64]) -> CountVector {
        CountVector::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ewrr3_examples() {
        let c = counts(&[450, 310, 240]);
        let est = mle_ewrr3(&c, 0.8).unwrap();
        assert!(close(est.pi0.estimate, 0.5, 1e-12));
        assert!(close(est.pi1.estimate, 0.3, 1e-12));
        assert!(close(est.pi2(), 0.2, 1e-12));
        // No-signal point: N_i = N(1-p)/2.
        let c = counts(&[100, 450, 450]);
        assert!(close(mle_ewrr3(&c, 0.8).unwrap().pi0.estimate, 0.0, 1e-12));
        assert!(mle_ewrr3(&c, 1.0 / 3.0).is_err());
    }

    #[test]
    fn var_ewrr3_example() {
        assert!(close(var_ewrr3(0.5, 0.8, 1000).unwrap(), 0.99 / 1960.0, 1e-15));
        let a = var_ewrr3(0.3, 0.7, 500).unwrap();
        let b = var_ewrr3(0.3, 0.7, 1000).unwrap();
        assert!(close(a, 2.0 * b, 1e-15));
    }

    #[test]
    fn ewrrn_examples() {
        let est = mle_ewrrn(&counts(&[700, 300]), 0.8, 2).unwrap();
        assert!(close(est[0].estimate, 500.0 / 600.0, 1e-12));
        let f = crate::mechanisms::calibrate_two_element(0.7, 0.8).unwrap();
        assert!(close(est[0].estimate, f, 1e-12));
        let c = counts(&[450, 310, 240]);
        let three = mle_ewrr3(&c, 0.8).unwrap();
        let n = mle_ewrrn(&c, 0.8, 3).unwrap();
        assert!(close(n[0].estimate, three.pi0.estimate, 1e-15));
        assert!(close(n[1].estimate, three.pi1.estimate, 1e-15));
        assert!(close(n[0].variance, three.pi0.variance, 1e-15));
    }

    #[test]
    fn corrected_ewrrn_variance_reduces_to_three_answer_form() {
        for &(pi, p) in &[(0.2, 0.7), (0.5, 0.8), (0.9, 0.1)] {
            assert!(close(var_ewrrn(pi, p, 3, 1000).unwrap(), var_ewrr3(pi, p, 1000).unwrap(), 1e-15));
            assert!(close(var_ewrrn(pi, p, 2, 1000).unwrap(), var_ewrrn_printed(pi, p, 2, 1000).unwrap(), 1e-15));
        }
        // For n > 2 the printed second factor is too small.
        assert!(var_ewrrn_printed(0.25, 0.7, 4, 1000).unwrap() < var_ewrrn(0.25, 0.7, 4, 1000).unwrap());
    }

    #[test]
    fn corrected_ewrrn_variance_matches_affine_propagation() {
        for n in 2..7usize {
            for &p in &[0.05, 0.6, 0.9] {
                let spec = MechanismSpec::Ewrr { p, n };
                let matrix = build_matrix(&spec).unwrap();
                let mut pi = vec![0.0; n];
                pi[0] = 0.3;
                for v in pi.iter_mut().skip(1) {
                    *v = 0.7 / (n as f64 - 1.0);
                }
                let response = matrix.left_mul(&pi).unwrap();
                let form = ewrr_affine(p, n, 0);
                let want = form.variance(&response, 1000.0);
                let got = var_ewrrn(0.3, p, n, 1000).unwrap();
                assert!((got - want).abs() <= 1e-12 * want, "n={n} p={p}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn three_answer_pi0_examples() {
        // Frequencies for N = 1000 with N0/N as in the examples.
        let dag = mle_rr3dagger(&counts(&[430, 300, 270]), 0.7, 0.5).unwrap();
        assert!(close(dag.pi0.estimate, 0.4, 1e-12));
        let dd = mle_rr3doubledagger(&counts(&[450, 300, 250]), 0.75, 0.8).unwrap();
        assert!(close(dd.pi0.estimate, 0.4, 1e-12));
        let dd0 = mle_rr3doubledagger(&counts(&[250, 400, 350]), 0.75, 0.8).unwrap();
        assert!(close(dd0.pi0.estimate, 0.0, 1e-12));
        let club = mle_rr3club(&counts(&[550, 250, 200]), 0.8, 0.7, 0.9).unwrap();
        assert!(close(club.pi0.estimate, 0.5, 1e-12));
        let club0 = mle_rr3club(&counts(&[300, 400, 300]), 0.8, 0.7, 0.9).unwrap();
        assert!(close(club0.pi0.estimate, 0.0, 1e-12));
    }

    #[test]
    fn dagger_with_equal_parameters_is_ewrr3() {
        let c = counts(&[420, 330, 250]);
        for &p in &[0.2, 0.6, 0.9] {
            let a = mle_rr3dagger(&c, p, p).unwrap();
            let b = mle_ewrr3(&c, p).unwrap();
            assert!(close(a.pi0.estimate, b.pi0.estimate, 1e-12));
            assert!(close(a.pi1.estimate, b.pi1.estimate, 1e-12));
        }
    }

    #[test]
    fn printed_pi1_audit() {
        let dag = MechanismSpec::Rr3Dagger { p1: 0.7, p2: 0.5 };
        let dd = MechanismSpec::Rr3DoubleDagger { p1: 0.75, p2: 0.8 };
        let club = MechanismSpec::Rr3Club { p1: 0.8, p2: 0.7, q: 0.9 };
        let ewrr = MechanismSpec::Ewrr { p: 0.8, n: 3 };
        assert!(printed_pi1_bias(&dag).unwrap() > 0.1);
        assert!(printed_pi1_bias(&dd).unwrap() > 0.1);
        assert!(printed_pi1_bias(&club).unwrap() < BIAS_TOLERANCE);
        assert!(printed_pi1_bias(&ewrr).unwrap() < BIAS_TOLERANCE);

        // Expected printed dagger value at π = (.4,.35,.25) is 0.35 − 1/0.9.
        let m = build_matrix(&dag).unwrap();
        let r = m.left_mul(&[0.4, 0.35, 0.25]).unwrap();
        let v = printed_pi1_affine(&dag).unwrap().eval(&r);
        assert!(close(v, 0.35 - 1.0 / 0.9, 1e-12));
    }

    #[test]
    fn fallback_is_flagged() {
        let c = counts(&[430, 300, 270]);
        let dag = mle_rr3dagger(&c, 0.7, 0.5).unwrap();
        assert!(dag.pi1.flags.inversion_fallback && dag.pi1.flags.printed_form_biased);
        assert!(!dag.pi0.flags.inversion_fallback);
        let club = mle_rr3club(&c, 0.8, 0.7, 0.9).unwrap();
        assert!(!club.pi1.flags.inversion_fallback);
        let inv =
            inversion_estimate(&c.observed(), &build_matrix(&MechanismSpec::Rr3Dagger { p1: 0.7, p2: 0.5 }).unwrap())
                .unwrap();
        assert!(close(dag.pi1.estimate, inv.get(1), 1e-12));
        assert!(close(dag.pi0.estimate, inv.get(0), 1e-12));
    }

    #[test]
    fn closed_form_variances_match_affine_propagation() {
        let pi = [0.4, 0.35, 0.25];
        let cases = [
            MechanismSpec::Ewrr { p: 0.8, n: 3 },
            MechanismSpec::Rr3Dagger { p1: 0.7, p2: 0.5 },
            MechanismSpec::Rr3DoubleDagger { p1: 0.75, p2: 0.8 },
            MechanismSpec::Rr3Club { p1: 0.8, p2: 0.7, q: 0.9 },
        ];
        for spec in cases {
            let m = build_matrix(&spec).unwrap();
            let r = m.left_mul(&pi).unwrap();
            let want = pi0_affine(&spec).unwrap().variance(&r, 1e4);
            let truth = ProportionVector::truth(pi.to_vec()).unwrap();
            let got = closed_form_pi0_variance(&spec, &truth, 10_000).unwrap();
            assert!((got - want).abs() <= 1e-12 * want, "{spec}: {got} vs {want}");
            // Also equals the inversion variance, since π̂₀ is the inversion coordinate.
            let inv = inversion_variance(&truth, &m, 10_000).unwrap();
            assert!((inv[0] - want).abs() <= 1e-10 * want);
        }
    }

    #[test]
    fn count_variance_examples() {
        let id = ProbabilityMatrix::identity(3).unwrap();
        let unit = ProportionVector::truth(vec![1.0, 0.0, 0.0]).unwrap();
        let a0 = AnswerIndex::new(0, 3).unwrap();
        assert_eq!(count_variance(&unit, &id, a0, 100).unwrap(), 0.0);
        let p = build_matrix(&MechanismSpec::Ewrr { p: 0.8, n: 3 }).unwrap();
        let pi = ProportionVector::truth(vec![0.5, 0.3, 0.2]).unwrap();
        assert!(close(count_variance(&pi, &p, a0, 1000).unwrap(), 247.5, 1e-9));
        let uniform = ProportionVector::truth(vec![1.0 / 3.0; 3]).unwrap();
        assert!(close(count_variance(&uniform, &p, a0, 900).unwrap(), 200.0, 1e-9));
        let two = ProportionVector::truth(vec![0.5, 0.5]).unwrap();
        assert!(count_variance(&two, &p, a0, 10).is_err());
    }

    #[test]
    fn inversion_examples() {
        let p = build_matrix(&MechanismSpec::Ewrr { p: 0.8, n: 3 }).unwrap();
        let obs = ProportionVector::observed(vec![0.45, 0.31, 0.24]).unwrap();
        let est = inversion_estimate(&obs, &p).unwrap();
        for (a, b) in est.values().iter().zip([0.5, 0.3, 0.2]) {
            assert!(close(*a, b, 1e-12));
        }
        let id = ProbabilityMatrix::identity(3).unwrap();
        assert_eq!(inversion_estimate(&obs, &id).unwrap().values(), obs.values());
        let sing = build_matrix(&MechanismSpec::Ewrr { p: 1.0 / 3.0, n: 3 }).unwrap();
        match inversion_estimate(&obs, &sing) {
            Err(Error::SingularMatrix { mechanism, .. }) => assert!(mechanism.contains("p=0.333")),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn numeric_mle_matches_closed_forms() {
        let p = build_matrix(&MechanismSpec::Ewrr { p: 0.8, n: 3 }).unwrap();
        let c = counts(&[450, 310, 240]);
        let est = mle_numeric_detailed(&c, &p).unwrap();
        assert_eq!(est.path, SolverPath::Newton);
        assert!(close(est.estimate.get(0), 0.5, 1e-8));
        assert!(close(est.estimate.get(1), 0.3, 1e-8));

        let id = ProbabilityMatrix::identity(3).unwrap();
        let est = mle_numeric(&counts(&[60, 30, 10]), &id).unwrap();
        assert!(close(est.get(0), 0.6, 1e-8) && close(est.get(1), 0.3, 1e-8));

        let club = MechanismSpec::Rr3Club { p1: 0.8, p2: 0.7, q: 0.9 };
        let m = build_matrix(&club).unwrap();
        let c = counts(&[4500, 3100, 2400]);
        let closed = mle_rr3club(&c, 0.8, 0.7, 0.9).unwrap();
        let num = mle_numeric(&c, &m).unwrap();
        assert!(close(num.get(0), closed.pi0.estimate, 1e-8));
        assert!(close(num.get(1), closed.pi1.estimate, 1e-8));
    }

    #[test]
    fn numeric_mle_hessian_is_negative_definite_on_diagonal() {
        let m = build_matrix(&MechanismSpec::Rr3DoubleDagger { p1: 0.75, p2: 0.8 }).unwrap();
        let c = counts(&[4500, 3000, 2500]);
        let est = mle_numeric(&c, &m).unwrap();
        let h = log_likelihood_hessian(&c, &m, est.values()).unwrap();
        assert!(h[0][0] < 0.0 && h[1][1] < 0.0);
    }

    #[test]
    fn numeric_mle_handles_boundary_maximum() {
        // Counts whose inversion estimate has a negative coordinate.
        let m = build_matrix(&MechanismSpec::Ewrr { p: 0.8, n: 3 }).unwrap();
        let c = counts(&[50, 500, 450]);
        let inv = inversion_estimate(&c.observed(), &m).unwrap();
        assert!(inv.get(0) < 0.0);
        let est = mle_numeric_detailed(&c, &m).unwrap();
        assert_eq!(est.path, SolverPath::ExpectationMaximization);
        assert!(est.estimate.values().iter().all(|&v| v >= 0.0));
        assert!(close(est.estimate.sum(), 1.0, 1e-9));
        // No simplex point nearby does better.
        let best = est.log_likelihood;
        for d in [1e-3, -1e-3] {
            let mut q = est.estimate.values().to_vec();
            q[1] += d;
            q[2] -= d;
            if q.iter().all(|&v| v >= 0.0) {
                assert!(log_likelihood(&c, &m, &q).unwrap() <= best + 1e-9);
            }
        }
    }

    #[test]
    fn csv_export_has_header_and_flags() {
        let c = counts(&[430, 300, 270]);
        let dag = mle_rr3dagger(&c, 0.7, 0.5).unwrap();
        let csv = records_to_csv(&[
            EstimateRecord::new("p1=0.7,p2=0.5", 0, &dag.pi0),
            EstimateRecord::new("p1=0.7,p2=0.5", 1, &dag.pi1),
        ]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "estimator,parameters,answer,estimate,variance,flags");
        assert!(lines[2].ends_with("printed_form_biased;inversion_fallback"));
    }
}
