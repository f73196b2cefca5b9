//! Summary statistics used by the tests and the simulation harness.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; NaN for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `observed` counts against `expected`
/// probabilities. Categories with zero expected probability are dropped;
/// an observation in one of them yields p = 0.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() {
        return Err(Error::DimensionMismatch { expected: expected.len(), got: observed.len() });
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::InvalidCounts("no observations".into()));
    }
    let n = total as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected) {
        if p <= 0.0 {
            if o > 0 {
                return Ok(ChiSquareTest { statistic: f64::INFINITY, degrees_of_freedom: 0, p_value: 0.0 });
            }
            continue;
        }
        let e = n * p;
        statistic += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return Ok(ChiSquareTest { statistic, degrees_of_freedom: 0, p_value: 1.0 });
    }
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidCounts(e.to_string()))?;
    Ok(ChiSquareTest { statistic, degrees_of_freedom: dof, p_value: dist.sf(statistic) })
}
