//! Multinomial sampling.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

/// Draws `Multinomial(n, probs)` by sequential conditional binomials.
///
/// `probs` must be non-negative and sum to one (within 1e-9); the final
/// category absorbs whatever remains so the counts always sum to `n`.
pub fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    if probs.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProportions(format!(
            "multinomial probabilities must be a distribution, got {probs:?}"
        )));
    }
    let mut out = vec![0u64; probs.len()];
    let mut remaining_n = n;
    let mut remaining_p = 1.0f64;
    let last = probs.len() - 1;
    for (k, &p) in probs.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if k == last {
            out[k] = remaining_n;
            break;
        }
        let cond = if remaining_p <= 0.0 { 0.0 } else { (p / remaining_p).clamp(0.0, 1.0) };
        let draw = if cond <= 0.0 {
            0
        } else if cond >= 1.0 {
            remaining_n
        } else {
            Binomial::new(remaining_n, cond).map_err(|e| Error::InvalidProportions(e.to_string()))?.sample(rng)
        };
        out[k] = draw;
        remaining_n -= draw;
        remaining_p -= p;
    }
    Ok(out)
}
