//! Privacy budgets.
//!
//! The ε of a finite-output mechanism is the log of the largest ratio between
//! two entries of the same column of its kernel. The protocol budgets have
//! closed forms; each one is paired with a brute-force oracle that takes the
//! union of kernel rows over a parameter grid and applies the same column
//! ratio test.

use serde::{Deserialize, Serialize};

use crate::error::{check_budget, Error, Result};
use crate::estimators::{var_ewrrn, var_rr3dagger_unchecked};
use crate::matrix::ProbabilityMatrix;
use crate::protocols::{lpp_matrix, lppdagger_matrix, ue_matrix, UeParams};

/// Slack on `≤` inequalities in region membership tests.
pub const REGION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Column-ratio analysis of a single kernel.
    MatrixAnalysis,
    /// Sequential composition (sum).
    Composition,
    /// LPP closed form, `ε₁ + ε₂`.
    Lpp,
    /// LPP‡ closed form, `ln(2e^{ε₁+ε₂}/(e^{ε₂}+1))`.
    LppDagger,
    /// PCKV-UE closed form, `max{ε₂, ln(2e^{ε₁+ε₂}/(e^{ε₂}+1))}`.
    PckvUe,
    /// Union of kernel rows over a parameter grid.
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub provenance: Provenance,
    /// `(ε₁, ε₂)` for protocol budgets.
    pub inputs: Option<(f64, f64)>,
}

impl PrivacyBudget {
    fn protocol(epsilon: f64, provenance: Provenance, e1: f64, e2: f64) -> Self {
        Self { epsilon, provenance, inputs: Some((e1, e2)) }
    }
}

/// Closed-form budget next to its oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub epsilon: f64,
    pub provenance: Provenance,
    pub inputs: Option<(f64, f64)>,
    pub oracle_epsilon: f64,
    pub abs_diff: f64,
}

impl BudgetReport {
    pub fn new(budget: PrivacyBudget, oracle_epsilon: f64) -> Self {
        Self {
            epsilon: budget.epsilon,
            provenance: budget.provenance,
            inputs: budget.inputs,
            oracle_epsilon,
            abs_diff: (budget.epsilon - oracle_epsilon).abs(),
        }
    }
}

/// Running per-column max and min over any number of kernel rows.
#[derive(Debug, Clone)]
struct ColumnExtremes {
    max: Vec<f64>,
    min: Vec<f64>,
}

impl ColumnExtremes {
    fn new(m: usize) -> Self {
        Self { max: vec![f64::NEG_INFINITY; m], min: vec![f64::INFINITY; m] }
    }

    fn absorb(&mut self, matrix: &ProbabilityMatrix) -> Result<()> {
        if matrix.m() != self.max.len() {
            return Err(Error::DimensionMismatch { expected: self.max.len(), got: matrix.m() });
        }
        for (i, row) in matrix.rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v <= 0.0 {
                    return Err(Error::UnboundedBudget(format!("{}: entry ({i}, {j}) is zero", matrix.label())));
                }
                self.max[j] = self.max[j].max(v);
                self.min[j] = self.min[j].min(v);
            }
        }
        Ok(())
    }

    fn epsilon(&self) -> f64 {
        self.max.iter().zip(&self.min).map(|(hi, lo)| hi / lo).fold(1.0, f64::max).ln()
    }
}

/// `ε = ln max_j (max_i P_ij / min_i P_ij)`.
pub fn epsilon_of_matrix(matrix: &ProbabilityMatrix) -> Result<PrivacyBudget> {
    let mut ext = ColumnExtremes::new(matrix.m());
    ext.absorb(matrix)?;
    Ok(PrivacyBudget { epsilon: ext.epsilon(), provenance: Provenance::MatrixAnalysis, inputs: None })
}

/// Sequential composition: the budgets add.
pub fn compose(budgets: &[PrivacyBudget]) -> Result<PrivacyBudget> {
    if budgets.is_empty() {
        return Err(Error::EmptyComposition);
    }
    Ok(PrivacyBudget {
        epsilon: budgets.iter().map(|b| b.epsilon).sum(),
        provenance: Provenance::Composition,
        inputs: None,
    })
}

/// Brute-force ε over the cartesian product of `grids`.
///
/// `build` maps one parameter point to a kernel. Rows from every grid point
/// are pooled, so the result covers ratios between inputs at different
/// parameter values as well as within one kernel.
pub fn budget_bruteforce<F>(build: F, grids: &[Vec<f64>]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<ProbabilityMatrix>,
{
    if grids.iter().any(Vec::is_empty) {
        return Err(Error::Config("empty parameter grid".into()));
    }
    let mut ext: Option<ColumnExtremes> = None;
    let mut index = vec![0usize; grids.len()];
    let mut point = vec![0.0; grids.len()];
    loop {
        for (k, &i) in index.iter().enumerate() {
            point[k] = grids[k][i];
        }
        let matrix = build(&point)?;
        ext.get_or_insert_with(|| ColumnExtremes::new(matrix.m())).absorb(&matrix)?;

        // Odometer increment.
        let mut k = 0;
        loop {
            if k == grids.len() {
                return Ok(ext.map_or(0.0, |e| e.epsilon()));
            }
            index[k] += 1;
            if index[k] < grids[k].len() {
                break;
            }
            index[k] = 0;
            k += 1;
        }
    }
}

/// `points` evenly spaced values over `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|k| if k == points - 1 { hi } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Optimal parameters and feasibility regions

fn check_n(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewAnswers(n));
    }
    Ok(n as f64)
}

/// `e^ε / (e^ε + n − 1)`: the variance-minimising `p` above `1/n`.
pub fn optimal_p_high(epsilon: f64, n: usize) -> Result<f64> {
    let e = check_budget(epsilon)?.exp();
    Ok(e / (e + check_n(n)? - 1.0))
}

/// `1 / ((n − 1) e^ε + 1)`: the variance-minimising `p` below `1/n`.
pub fn optimal_p_low(epsilon: f64, n: usize) -> Result<f64> {
    let e = check_budget(epsilon)?.exp();
    Ok(1.0 / ((check_n(n)? - 1.0) * e + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionFamily {
    /// EWRR with `1/n < p ≤ e^ε/(e^ε+n−1)`.
    OmegaN,
    /// EWRR with `1/((n−1)e^ε+1) ≤ p < 1/n`.
    OmegaPrimeN,
    /// RR3Dagger with `p₁ < p₂`.
    DaggerUpper,
    /// RR3Dagger with `p₂ < p₁`.
    DaggerLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub family: RegionFamily,
    pub epsilon: f64,
    /// Answer count; ignored by the RR3Dagger families.
    pub n: usize,
}

impl FeasibleRegion {
    pub fn omega(epsilon: f64, n: usize) -> Self {
        Self { family: RegionFamily::OmegaN, epsilon, n }
    }

    pub fn omega_prime(epsilon: f64, n: usize) -> Self {
        Self { family: RegionFamily::OmegaPrimeN, epsilon, n }
    }

    pub fn dagger_upper(epsilon: f64) -> Self {
        Self { family: RegionFamily::DaggerUpper, epsilon, n: 3 }
    }

    pub fn dagger_lower(epsilon: f64) -> Self {
        Self { family: RegionFamily::DaggerLower, epsilon, n: 3 }
    }

    pub fn dimension(&self) -> usize {
        match self.family {
            RegionFamily::OmegaN | RegionFamily::OmegaPrimeN => 1,
            RegionFamily::DaggerUpper | RegionFamily::DaggerLower => 2,
        }
    }
}

fn le(a: f64, b: f64) -> bool {
    a <= b + REGION_TOLERANCE
}

/// Evaluates the region's inequality system at `point`.
pub fn region_contains(region: &FeasibleRegion, point: &[f64]) -> Result<bool> {
    if point.len() != region.dimension() {
        return Err(Error::DimensionMismatch { expected: region.dimension(), got: point.len() });
    }
    let e = region.epsilon.exp();
    let third = 1.0 / 3.0;
    Ok(match region.family {
        RegionFamily::OmegaN => {
            let n = check_n(region.n)?;
            let p = point[0];
            1.0 / n < p && le(p, e / (e + n - 1.0))
        }
        RegionFamily::OmegaPrimeN => {
            let n = check_n(region.n)?;
            let p = point[0];
            le(1.0 / ((n - 1.0) * e + 1.0), p) && p < 1.0 / n
        }
        RegionFamily::DaggerUpper => {
            let (p1, p2) = (point[0], point[1]);
            third < p1 && p1 < 1.0 && p1 < p2 && le(2.0 * p1, e * (1.0 - p2)) && third < p2 && le(p2, e / (e + 2.0))
        }
        RegionFamily::DaggerLower => {
            let (p1, p2) = (point[0], point[1]);
            third < p1
                && p1 < 1.0
                && third < p2
                && p2 < 1.0
                && p2 < p1
                && le(2.0 * p1, e * (1.0 - p2))
                && le(2.0 * p2, e * (1.0 - p1))
        }
    })
}

/// `∂Var(π̂₀)/∂p` for three-answer EWRR: `(2p − 6 − 2(3p−1)π₀) / ((3p−1)³N)`.
pub fn var_ewrr3_dp(pi0: f64, p: f64, total: f64) -> f64 {
    let d = 3.0 * p - 1.0;
    (2.0 * p - 6.0 - 2.0 * d * pi0) / (d * d * d * total)
}

/// `∂Var(π̂₀|P†)/∂p₁ = (−4(1−p₂²) − 4p₂Dπ₀) / (D³N)` with `D = 2p₁+p₂−1`.
pub fn var_rr3dagger_dp1(pi0: f64, p1: f64, p2: f64, total: f64) -> f64 {
    let d = 2.0 * p1 + p2 - 1.0;
    (-4.0 * (1.0 - p2 * p2) - 4.0 * p2 * d * pi0) / (d * d * d * total)
}

/// `∂Var(π̂₀|P†)/∂p₂ = (−2(1−p₂²) − [2p₂ + (2−4p₁)π₀]D) / (D³N)`.
pub fn var_rr3dagger_dp2(pi0: f64, p1: f64, p2: f64, total: f64) -> f64 {
    let d = 2.0 * p1 + p2 - 1.0;
    (-2.0 * (1.0 - p2 * p2) - (2.0 * p2 + (2.0 - 4.0 * p1) * pi0) * d) / (d * d * d * total)
}

/// The `∂/∂p₂` expression with `(1 − 4p₁)` in place of `(2 − 4p₁)`. It
/// disagrees with the derivative of the variance whenever `π₀ ≠ 0`.
pub fn var_rr3dagger_dp2_printed(pi0: f64, p1: f64, p2: f64, total: f64) -> f64 {
    let d = 2.0 * p1 + p2 - 1.0;
    (-2.0 * (1.0 - p2 * p2) - (2.0 * p2 + (1.0 - 4.0 * p1) * pi0) * d) / (d * d * d * total)
}

/// `(p, Var(π̂₀))` curve over an EWRR feasibility region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSweep {
    pub region: FeasibleRegion,
    pub pi0: f64,
    pub total: u64,
    pub points: Vec<(f64, f64)>,
    /// Closed-form optimum of the region.
    pub optimum: f64,
    pub optimum_in_region: bool,
    pub optimum_variance: f64,
    pub strictly_decreasing: bool,
    pub strictly_increasing: bool,
    /// Whether the analytic derivative has the expected sign at every point
    /// (negative on `Ω_n`, positive on `Ω′_n`). Only computed for `n = 3`.
    pub derivative_sign_ok: Option<bool>,
}

/// Sweeps `Var(π̂₀)` over `points` grid values of an EWRR region.
///
/// On `Ω_n` the grid is `(1/n, hi]`, on `Ω′_n` it is `[lo, 1/n)`; the open
/// end, where the variance is undefined, is never sampled.
pub fn variance_sweep(region: &FeasibleRegion, pi0: f64, total: u64, points: usize) -> Result<VarianceSweep> {
    check_budget(region.epsilon)?;
    let n = region.n;
    let inv_n = 1.0 / check_n(n)?;
    if points == 0 {
        return Err(Error::Config("sweep needs at least one point".into()));
    }
    let (optimum, grid): (f64, Vec<f64>) = match region.family {
        RegionFamily::OmegaN => {
            let hi = optimal_p_high(region.epsilon, n)?;
            let step = (hi - inv_n) / points as f64;
            (hi, (1..=points).map(|k| if k == points { hi } else { inv_n + step * k as f64 }).collect())
        }
        RegionFamily::OmegaPrimeN => {
            let lo = optimal_p_low(region.epsilon, n)?;
            let step = (inv_n - lo) / points as f64;
            (lo, (0..points).map(|k| lo + step * k as f64).collect())
        }
        _ => return Err(Error::Config("variance sweep needs an EWRR region".into())),
    };
    let curve = grid.iter().map(|&p| Ok((p, var_ewrrn(pi0, p, n, total)?))).collect::<Result<Vec<_>>>()?;
    let strictly_decreasing = curve.windows(2).all(|w| w[1].1 < w[0].1);
    let strictly_increasing = curve.windows(2).all(|w| w[1].1 > w[0].1);
    let derivative_sign_ok = (n == 3).then(|| {
        curve.iter().all(|&(p, _)| {
            let d = var_ewrr3_dp(pi0, p, total as f64);
            match region.family {
                RegionFamily::OmegaN => d < 0.0,
                _ => d > 0.0,
            }
        })
    });
    Ok(VarianceSweep {
        region: *region,
        pi0,
        total,
        optimum_in_region: region_contains(region, &[optimum])?,
        optimum_variance: var_ewrrn(pi0, optimum, n, total)?,
        optimum,
        points: curve,
        strictly_decreasing,
        strictly_increasing,
        derivative_sign_ok,
    })
}

/// Result of a variance minimisation over a feasibility region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Minimisers inside the region (may be empty).
    pub argmin: Vec<Vec<f64>>,
    /// Smallest variance seen; an infimum when `argmin` is empty.
    pub achieved_variance: f64,
    /// Boundary set `Λ` where the infimum is approached, when applicable.
    pub boundary_set: Vec<f64>,
}

/// Grid check that `Var(π̂₀|P†)` has no minimiser inside the `p₂ < p₁`
/// region and that its infimum sits on the `p₂ → 1/3` edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaggerBoundaryCheck {
    pub epsilon: f64,
    pub pi0: f64,
    pub grid: usize,
    pub result: OptimizationResult,
    /// Grid points inside the region.
    pub region_points: usize,
    /// Grid points whose four neighbours are all inside the region.
    pub interior_points: usize,
    /// Interior points strictly below all four neighbours.
    pub interior_local_minima: usize,
    /// `∂Var/∂p₁ < 0` at every region point, by the analytic formula.
    pub dp1_negative_everywhere: bool,
    /// Largest relative gap between the analytic `∂/∂p₁` and a central
    /// finite difference.
    pub dp1_max_rel_error: f64,
    /// Largest relative gap between the `(1 − 4p₁)` variant of `∂/∂p₂` and a
    /// central finite difference.
    pub dp2_printed_max_rel_error: f64,
    /// `e^ε/3`.
    pub lambda_closed_form: f64,
    /// Minimiser over `p₁` on the `p₂ = 1/3` edge of the region's closure.
    pub lambda_numeric: f64,
    /// `Var` at `(Λ, 1/3)`.
    pub boundary_infimum: f64,
}

/// Runs the grid check over a `grid × grid` lattice covering the `p₂ < p₁`
/// dagger region at `epsilon`, for `0 < ε < ln 3`.
///
/// The lattice spans `(1/3, min(1, e^ε/3)]` in both coordinates; only points
/// satisfying the region's inequalities are evaluated.
pub fn verify_dagger_boundary(epsilon: f64, grid: usize, pi0: f64) -> Result<DaggerBoundaryCheck> {
    if !(epsilon > 0.0 && epsilon < 3f64.ln()) {
        return Err(Error::BoundaryUndefined(epsilon));
    }
    if grid < 3 {
        return Err(Error::Config("grid must have at least 3 points per axis".into()));
    }
    let region = FeasibleRegion::dagger_lower(epsilon);
    let e = epsilon.exp();
    let third = 1.0 / 3.0;
    let hi = (e / 3.0).min(1.0);
    let step = (hi - third) / grid as f64;
    let axis: Vec<f64> = (1..=grid).map(|k| if k == grid { hi } else { third + step * k as f64 }).collect();
    // Variance is reported at unit N; the shape does not depend on N.
    let var = |p1: f64, p2: f64| var_rr3dagger_unchecked(pi0, p1, p2, 1.0);

    let mut values = vec![None; grid * grid];
    let mut region_points = 0;
    let mut best = f64::INFINITY;
    let mut dp1_negative = true;
    let mut dp1_err: f64 = 0.0;
    let mut dp2_printed_err: f64 = 0.0;
    let h = 1e-6;
    for (a, &p1) in axis.iter().enumerate() {
        for (b, &p2) in axis.iter().enumerate() {
            if !region_contains(&region, &[p1, p2])? {
                continue;
            }
            region_points += 1;
            let v = var(p1, p2);
            values[a * grid + b] = Some(v);
            best = best.min(v);
            let d1 = var_rr3dagger_dp1(pi0, p1, p2, 1.0);
            dp1_negative &= d1 < 0.0;
            let fd1 = (var(p1 + h, p2) - var(p1 - h, p2)) / (2.0 * h);
            dp1_err = dp1_err.max(((d1 - fd1) / fd1).abs());
            let fd2 = (var(p1, p2 + h) - var(p1, p2 - h)) / (2.0 * h);
            let d2p = var_rr3dagger_dp2_printed(pi0, p1, p2, 1.0);
            dp2_printed_err = dp2_printed_err.max(((d2p - fd2) / fd2).abs());
        }
    }

    let mut interior_points = 0;
    let mut minima = Vec::new();
    for a in 1..grid - 1 {
        for b in 1..grid - 1 {
            let Some(v) = values[a * grid + b] else { continue };
            let neighbours = [(a - 1, b), (a + 1, b), (a, b - 1), (a, b + 1)];
            let nv: Vec<f64> = neighbours.iter().filter_map(|&(x, y)| values[x * grid + y]).collect();
            if nv.len() < 4 {
                continue;
            }
            interior_points += 1;
            if nv.iter().all(|&w| v < w) {
                minima.push(vec![axis[a], axis[b]]);
            }
        }
    }

    // Edge p₂ = 1/3 of the closure: p₁ ≤ e^ε/3 and p₁ ≤ 1 − 2/(3e^ε).
    let lambda_bound = (e / 3.0).min(1.0 - 2.0 / (3.0 * e));
    let fine = 20 * grid;
    let mut lambda_numeric = f64::NAN;
    let mut boundary_best = f64::INFINITY;
    for k in 1..=fine {
        let p1 = third + (1.0 - third) * k as f64 / fine as f64;
        let in_closure = le(2.0 * p1, e * (1.0 - third)) && le(2.0 * third, e * (1.0 - p1));
        if !in_closure {
            continue;
        }
        let v = var(p1, third);
        if v < boundary_best {
            boundary_best = v;
            lambda_numeric = p1;
        }
    }
    // The lattice may stop short of the true edge; refine to the bound.
    if lambda_numeric.is_finite() && var(lambda_bound, third) <= boundary_best {
        lambda_numeric = lambda_bound;
        boundary_best = var(lambda_bound, third);
    }

    let lambda_closed_form = e / 3.0;
    Ok(DaggerBoundaryCheck {
        epsilon,
        pi0,
        grid,
        result: OptimizationResult {
            argmin: minima.clone(),
            achieved_variance: best,
            boundary_set: vec![lambda_numeric],
        },
        region_points,
        interior_points,
        interior_local_minima: minima.len(),
        dp1_negative_everywhere: dp1_negative,
        dp1_max_rel_error: dp1_err,
        dp2_printed_max_rel_error: dp2_printed_err,
        lambda_closed_form,
        lambda_numeric,
        boundary_infimum: boundary_best,
    })
}

// ---------------------------------------------------------------------------
// Protocol budgets

fn protocol_inputs(e1: f64, e2: f64) -> Result<(f64, f64)> {
    Ok((check_budget(e1)?, check_budget(e2)?))
}

/// LPP: `ε₁ + ε₂`.
pub fn lpp_budget(epsilon1: f64, epsilon2: f64) -> Result<PrivacyBudget> {
    let (e1, e2) = protocol_inputs(epsilon1, epsilon2)?;
    Ok(PrivacyBudget::protocol(e1 + e2, Provenance::Lpp, e1, e2))
}

fn lppdagger_value(e1: f64, e2: f64) -> f64 {
    // ln(2 e^{e1+e2} / (e^{e2} + 1)), arranged to avoid overflow.
    e1 + std::f64::consts::LN_2 - (-e2).exp().ln_1p()
}

/// LPP‡: `ln(2e^{ε₁+ε₂} / (e^{ε₂}+1))`.
///
/// This counts the ratios against the no-edge row. The ratio between edge
/// rows with `w = 1` and `w = −1` is `e^{ε₂}`, which exceeds this value when
/// `e^{ε₁} < (e^{ε₂}+1)/2`; see [`lppdagger_budget_full`].
pub fn lppdagger_budget(epsilon1: f64, epsilon2: f64) -> Result<PrivacyBudget> {
    let (e1, e2) = protocol_inputs(epsilon1, epsilon2)?;
    Ok(PrivacyBudget::protocol(lppdagger_value(e1, e2), Provenance::LppDagger, e1, e2))
}

/// `max{ε₂, ln(2e^{ε₁+ε₂}/(e^{ε₂}+1))}`: the LPP‡ budget over all input
/// pairs, including edge-versus-edge.
pub fn lppdagger_budget_full(epsilon1: f64, epsilon2: f64) -> Result<PrivacyBudget> {
    let (e1, e2) = protocol_inputs(epsilon1, epsilon2)?;
    Ok(PrivacyBudget::protocol(lppdagger_value(e1, e2).max(e2), Provenance::LppDagger, e1, e2))
}

/// `ln((e^{ε₂}+1) / (2e^{ε₁}))`: the no-edge row's `−` cell over the
/// `w = 1` edge row's.
fn lppdagger_reverse_value(e1: f64, e2: f64) -> f64 {
    e2 + (-e2).exp().ln_1p() - std::f64::consts::LN_2 - e1
}

/// LPP‡ over no-edge versus edge pairs in both directions.
///
/// Equals [`lppdagger_budget`] unless the reverse ratio dominates, which
/// needs `ε₁` small against `ε₂`.
pub fn lppdagger_no_edge_budget(epsilon1: f64, epsilon2: f64) -> Result<PrivacyBudget> {
    let (e1, e2) = protocol_inputs(epsilon1, epsilon2)?;
    Ok(PrivacyBudget::protocol(
        lppdagger_value(e1, e2).max(lppdagger_reverse_value(e1, e2)),
        Provenance::LppDagger,
        e1,
        e2,
    ))
}

/// Whether the closed-form LPP‡ budget covers the no-edge pairs.
pub fn lppdagger_closed_form_covers_no_edge(epsilon1: f64, epsilon2: f64) -> bool {
    lppdagger_value(epsilon1, epsilon2) >= lppdagger_reverse_value(epsilon1, epsilon2)
}

/// Whether the closed-form LPP‡ budget covers every input pair.
pub fn lppdagger_closed_form_is_tight(epsilon1: f64, epsilon2: f64) -> bool {
    lppdagger_value(epsilon1, epsilon2) >= epsilon2
}

/// PCKV-UE: `max{ε₂, ln(2e^{ε₁+ε₂}/(e^{ε₂}+1))}`.
pub fn pckv_budget(epsilon1: f64, epsilon2: f64) -> Result<PrivacyBudget> {
    let (e1, e2) = protocol_inputs(epsilon1, epsilon2)?;
    Ok(PrivacyBudget::protocol(lppdagger_value(e1, e2).max(e2), Provenance::PckvUe, e1, e2))
}

/// LPP oracle over `points`-value grids of `w` and `w̃` in `[−1, 1]`.
pub fn lpp_budget_oracle(epsilon1: f64, epsilon2: f64, points: usize) -> Result<f64> {
    let (e1, e2) = protocol_inputs(epsilon1, epsilon2)?;
    let grid = linspace(-1.0, 1.0, points);
    budget_bruteforce(|x| lpp_matrix(e1, e2, x[0], x[1]), &[grid.clone(), grid])
}

/// LPP‡ oracle over a `points`-value grid of `w`.
pub fn lppdagger_budget_oracle(epsilon1: f64, epsilon2: f64, points: usize) -> Result<f64> {
    let (e1, e2) = protocol_inputs(epsilon1, epsilon2)?;
    budget_bruteforce(|x| lppdagger_matrix(e1, e2, x[0]), &[linspace(-1.0, 1.0, points)])
}

/// Largest ratio between a no-edge and an edge report, over a grid of `w`.
/// This is the quantity the closed-form LPP‡ budget bounds.
pub fn lppdagger_no_edge_oracle(epsilon1: f64, epsilon2: f64, points: usize) -> Result<f64> {
    let (e1, e2) = protocol_inputs(epsilon1, epsilon2)?;
    let mut best: f64 = 1.0;
    for w in linspace(-1.0, 1.0, points) {
        let m = lppdagger_matrix(e1, e2, w)?;
        for j in 0..3 {
            for edge_row in [1, 2] {
                let (x, y) = (m.get(0, j), m.get(edge_row, j));
                best = best.max(x / y).max(y / x);
            }
        }
    }
    Ok(best.ln())
}

/// `f(w̃) = max{Q₂(q,1)/Q₁(q,w̃), Q₂(q,1)/(1 − Q₁(q,w̃))}`.
pub fn dummy_weight_ratio(epsilon2: f64, wtilde: f64) -> f64 {
    let q = epsilon2.exp() / (epsilon2.exp() + 1.0);
    let q1 = (1.0 + wtilde) * q / 2.0 + (1.0 - wtilde) * (1.0 - q) / 2.0;
    (q / q1).max(q / (1.0 - q1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyWeightCheck {
    pub result: OptimizationResult,
    pub grid: Vec<(f64, f64)>,
    /// `2e^{ε₂}/(e^{ε₂}+1)`.
    pub expected_minimum: f64,
    pub max_asymmetry: f64,
}

/// Minimises [`dummy_weight_ratio`] over a `points`-value grid of `w̃`.
pub fn lppdagger_optimality_check(epsilon1: f64, epsilon2: f64, points: usize) -> Result<DummyWeightCheck> {
    let (_, e2) = protocol_inputs(epsilon1, epsilon2)?;
    if points < 2 {
        return Err(Error::Config("dummy-weight grid needs at least 2 points".into()));
    }
    let grid: Vec<(f64, f64)> =
        linspace(-1.0, 1.0, points).into_iter().map(|w| (w, dummy_weight_ratio(e2, w))).collect();
    let min = grid.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
    let argmin: Vec<Vec<f64>> = grid.iter().filter(|g| g.1 <= min * (1.0 + 1e-12)).map(|g| vec![g.0]).collect();
    let max_asymmetry = grid.iter().map(|&(w, v)| (v - dummy_weight_ratio(e2, -w)).abs()).fold(0.0, f64::max);
    Ok(DummyWeightCheck {
        result: OptimizationResult { argmin, achieved_variance: min, boundary_set: Vec::new() },
        grid,
        expected_minimum: 2.0 * e2.exp() / (e2.exp() + 1.0),
        max_asymmetry,
    })
}

/// The unary-encoding two-candidate rule:
/// `max{ln((ap/((1−b)/2))·(a/(1−b))), ln(ap/(a(1−p)))}`.
///
/// Agrees with [`ue_enumeration_budget`] when `a = b`.
pub fn ue_two_candidate_budget(params: &UeParams) -> f64 {
    let UeParams { a, b, p } = *params;
    let cross = (a * p / ((1.0 - b) / 2.0)) * (a / (1.0 - b));
    let same = p / (1.0 - p);
    cross.ln().max(same.ln())
}

/// Exact ε of PCKV-UE by enumeration over unary-encoded strings with
/// `positions` slots (≥ 2).
///
/// Inputs are the all-`(0,0)` string and every string with one slot set to
/// `(1, ±1)`. Each slot is perturbed independently through the UE kernel,
/// and all `3^positions` outputs are compared.
pub fn ue_enumeration_budget(params: &UeParams, positions: usize) -> Result<f64> {
    if !(2..=8).contains(&positions) {
        return Err(Error::Config("enumeration needs 2 to 8 positions".into()));
    }
    let kernel = ue_matrix(params)?;
    epsilon_ue_strings(&kernel, positions)
}

fn epsilon_ue_strings(kernel: &ProbabilityMatrix, positions: usize) -> Result<f64> {
    let mut inputs: Vec<Vec<usize>> = vec![vec![0; positions]];
    for slot in 0..positions {
        for state in [1, 2] {
            let mut x = vec![0; positions];
            x[slot] = state;
            inputs.push(x);
        }
    }
    let outputs = 3usize.pow(positions as u32);
    let mut best: f64 = 1.0;
    let mut ys = vec![0usize; positions];
    for code in 0..outputs {
        let mut c = code;
        for y in ys.iter_mut() {
            *y = c % 3;
            c /= 3;
        }
        let probs: Vec<f64> =
            inputs.iter().map(|x| x.iter().zip(&ys).map(|(&xi, &yi)| kernel.get(xi, yi)).product()).collect();
        let hi = probs.iter().copied().fold(0.0, f64::max);
        let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
        if lo <= 0.0 {
            return Err(Error::UnboundedBudget(format!("{}: zero output probability", kernel.label())));
        }
        best = best.max(hi / lo);
    }
    Ok(best.ln())
}
