//! Variance curves over feasibility regions and the optimum checks.

use rrldp::privacy::{
    optimal_p_high, optimal_p_low, region_contains, var_ewrr3_dp, variance_sweep, verify_dagger_boundary,
    DaggerBoundaryCheck, FeasibleRegion, VarianceSweep,
};
use serde::Serialize;

use crate::config::{SweepConfig, SweepRegion};
use crate::error::SimResult;
use crate::output::{num, Report, Table};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum SweepResult {
    Ewrr {
        sweep: VarianceSweep,
        /// Expected monotone direction: `decreasing` on Ω, `increasing` on Ω′.
        expected: String,
        pass: bool,
    },
    DaggerLower {
        check: DaggerBoundaryCheck,
        /// `min(e^ε/3, 1 − 2/(3e^ε))`, where the edge `p₂ = 1/3` leaves
        /// the region.
        expected_lambda: f64,
        grid_spacing: f64,
        pass: bool,
    },
}

/// Runs the sweep described by `c`.
pub fn run_bound_sweep(c: &SweepConfig) -> SimResult<SweepResult> {
    let eps = c.epsilon.0;
    Ok(match c.region {
        SweepRegion::Omega | SweepRegion::OmegaPrime => {
            let (region, expected) = if c.region == SweepRegion::Omega {
                (FeasibleRegion::omega(eps, c.n), "decreasing")
            } else {
                (FeasibleRegion::omega_prime(eps, c.n), "increasing")
            };
            let sweep = variance_sweep(&region, c.pi0, c.participants, c.points)?;
            let monotone =
                if c.region == SweepRegion::Omega { sweep.strictly_decreasing } else { sweep.strictly_increasing };
            let pass = monotone && sweep.optimum_in_region && sweep.derivative_sign_ok != Some(false);
            SweepResult::Ewrr { sweep, expected: expected.into(), pass }
        }
        SweepRegion::DaggerLower => {
            let check = verify_dagger_boundary(eps, c.points, c.pi0)?;
            let e = eps.exp();
            let expected_lambda = (e / 3.0).min(1.0 - 2.0 / (3.0 * e));
            let grid_spacing = ((e / 3.0).min(1.0) - 1.0 / 3.0) / c.points as f64;
            let lambda_ok = check.result.boundary_set.iter().all(|l| (l - expected_lambda).abs() <= grid_spacing);
            let pass = check.interior_local_minima == 0 && check.dp1_negative_everywhere && lambda_ok;
            SweepResult::DaggerLower { check, expected_lambda, grid_spacing, pass }
        }
    })
}

/// Closed-form optima for `(ε, n)`, with their region checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumReport {
    pub epsilon: f64,
    pub n: usize,
    pub p_high: f64,
    pub p_high_in_region: bool,
    pub p_low: f64,
    pub p_low_in_region: bool,
    /// Sign of `∂Var/∂p` just inside each optimum, for `n = 3`.
    pub derivative_at_p_high: Option<f64>,
    pub derivative_at_p_low: Option<f64>,
    /// Present for `n = 3` and `ε < ln 3`.
    pub dagger: Option<DaggerBoundaryCheck>,
}

pub fn optimize(epsilon: f64, n: usize, pi0: f64, grid: usize) -> SimResult<OptimumReport> {
    let p_high = optimal_p_high(epsilon, n)?;
    let p_low = optimal_p_low(epsilon, n)?;
    let three = n == 3;
    let dagger = if three && epsilon < 3f64.ln() { Some(verify_dagger_boundary(epsilon, grid, pi0)?) } else { None };
    Ok(OptimumReport {
        epsilon,
        n,
        p_high,
        p_high_in_region: region_contains(&FeasibleRegion::omega(epsilon, n), &[p_high])?,
        p_low,
        p_low_in_region: region_contains(&FeasibleRegion::omega_prime(epsilon, n), &[p_low])?,
        derivative_at_p_high: three.then(|| var_ewrr3_dp(pi0, p_high, 1.0)),
        derivative_at_p_low: three.then(|| var_ewrr3_dp(pi0, p_low, 1.0)),
        dagger,
    })
}

impl Report for OptimumReport {
    fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("optimum", &["key", "value"]);
        let mut kv = |k: &str, v: String| t.push(vec![k.into(), v]);
        kv("epsilon", num(self.epsilon));
        kv("n", self.n.to_string());
        kv("p_high", num(self.p_high));
        kv("p_high_in_region", self.p_high_in_region.to_string());
        kv("p_low", num(self.p_low));
        kv("p_low_in_region", self.p_low_in_region.to_string());
        if let Some(d) = self.derivative_at_p_high {
            kv("dvar_dp_at_p_high", num(d));
        }
        if let Some(d) = self.derivative_at_p_low {
            kv("dvar_dp_at_p_low", num(d));
        }
        if let Some(c) = &self.dagger {
            dagger_rows(c, &mut kv);
        }
        vec![t]
    }

    fn pass(&self) -> bool {
        self.p_high_in_region && self.p_low_in_region
    }
}

fn dagger_rows(c: &DaggerBoundaryCheck, kv: &mut impl FnMut(&str, String)) {
    kv("dagger_grid", c.grid.to_string());
    kv("dagger_region_points", c.region_points.to_string());
    kv("dagger_interior_points", c.interior_points.to_string());
    kv("dagger_interior_local_minima", c.interior_local_minima.to_string());
    kv("dagger_infimum_variance", num(c.result.achieved_variance));
    kv("dagger_dp1_negative_everywhere", c.dp1_negative_everywhere.to_string());
    kv("dagger_dp1_max_rel_error", num(c.dp1_max_rel_error));
    kv("dagger_dp2_printed_max_rel_error", num(c.dp2_printed_max_rel_error));
    kv("lambda_closed_form", num(c.lambda_closed_form));
    kv("lambda_numeric", num(c.lambda_numeric));
    kv("boundary_infimum", num(c.boundary_infimum));
}

impl Report for SweepResult {
    fn tables(&self) -> Vec<Table> {
        match self {
            SweepResult::Ewrr { sweep, expected, pass } => {
                let mut curve = Table::new("curve", &["p", "variance", "dvar_dp"]);
                for &(p, v) in &sweep.points {
                    let d = if sweep.region.n == 3 {
                        num(var_ewrr3_dp(sweep.pi0, p, sweep.total as f64))
                    } else {
                        String::new()
                    };
                    curve.push(vec![num(p), num(v), d]);
                }
                let mut t = Table::new("optimum", &["key", "value"]);
                let mut kv = |k: &str, v: String| t.push(vec![k.into(), v]);
                kv("epsilon", num(sweep.region.epsilon));
                kv("n", sweep.region.n.to_string());
                kv("pi0", num(sweep.pi0));
                kv("participants", sweep.total.to_string());
                kv("optimum", num(sweep.optimum));
                kv("optimum_in_region", sweep.optimum_in_region.to_string());
                kv("optimum_variance", num(sweep.optimum_variance));
                kv("expected_direction", expected.clone());
                kv("strictly_decreasing", sweep.strictly_decreasing.to_string());
                kv("strictly_increasing", sweep.strictly_increasing.to_string());
                kv("derivative_sign_ok", sweep.derivative_sign_ok.map(|b| b.to_string()).unwrap_or_default());
                kv("pass", pass.to_string());
                vec![curve, t]
            }
            SweepResult::DaggerLower { check, expected_lambda, grid_spacing, pass } => {
                let mut t = Table::new("optimum", &["key", "value"]);
                let mut kv = |k: &str, v: String| t.push(vec![k.into(), v]);
                kv("epsilon", num(check.epsilon));
                kv("pi0", num(check.pi0));
                dagger_rows(check, &mut kv);
                let set: Vec<String> = check.result.boundary_set.iter().map(|&l| num(l)).collect();
                kv("boundary_set", set.join(" "));
                kv("expected_lambda", num(*expected_lambda));
                kv("grid_spacing", num(*grid_spacing));
                kv("pass", pass.to_string());
                let mut minima = Table::new("interior_minima", &["p1", "p2"]);
                for m in &check.result.argmin {
                    minima.push(vec![num(m[0]), num(m[1])]);
                }
                vec![t, minima]
            }
        }
    }

    fn pass(&self) -> bool {
        match self {
            SweepResult::Ewrr { pass, .. } | SweepResult::DaggerLower { pass, .. } => *pass,
        }
    }
}
