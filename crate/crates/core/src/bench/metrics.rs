use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Uniform mask with exactly `round(ρ·m·n)` observed cells.
pub fn sample_mask(m: usize, n: usize, rho: f64, seed: u64) -> Result<DMatrix<bool>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("sampling rate {rho} must lie in (0, 1)")));
    }
    let total = m * n;
    let count = (rho * total as f64).round() as usize;
    if count < 1 {
        return Err(Error::invalid(format!(
            "sampling rate {rho} observes no entry of a {m}x{n} matrix"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = DMatrix::from_element(m, n, false);
    for idx in index::sample(&mut rng, total, count) {
        mask[idx] = true;
    }
    Ok(mask)
}

fn missing_sums<F: Fn(f64, f64) -> (f64, f64)>(
    truth: &DMatrix<f64>,
    estimate: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    term: F,
) -> Result<(f64, f64)> {
    if truth.shape() != estimate.shape() || truth.shape() != mask.shape() {
        return Err(Error::dims("truth, estimate and mask must share a shape"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&t, &e), &m) in truth.iter().zip(estimate.iter()).zip(mask.iter()) {
        if !m {
            let (a, b) = term(t, e);
            num += a;
            den += b;
        }
    }
    Ok((num, den))
}

/// `sqrt(Σ_{Ω̄}(X − X̂)² / Σ_{Ω̄} X²)`.
pub fn rse(truth: &DMatrix<f64>, estimate: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<f64> {
    let (num, den) = missing_sums(truth, estimate, mask, |t, e| ((t - e) * (t - e), t * t))?;
    if den == 0.0 {
        return Err(Error::ZeroDenominator("RSE: missing ground-truth entries are all zero"));
    }
    Ok((num / den).sqrt())
}

/// `Σ_{Ω̄}|X − X̂| / Σ_{Ω̄}|X|`.
pub fn rae(truth: &DMatrix<f64>, estimate: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<f64> {
    let (num, den) = missing_sums(truth, estimate, mask, |t, e| ((t - e).abs(), t.abs()))?;
    if den == 0.0 {
        return Err(Error::ZeroDenominator("RAE: missing ground-truth entries are all zero"));
    }
    Ok(num / den)
}
