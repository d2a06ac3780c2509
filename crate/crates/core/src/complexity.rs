//! Degrees-of-freedom calculators for feature-space rank.
//!
//! For a matrix whose order-`q` feature matrix has rank `d̃`, the smallest
//! ambient dimension reaching that monomial count is
//! `r̃ = min{o : C(o+q, q) ≥ d̃}`, and the minimum number of parameters that
//! pin the matrix down is `(m − r̃)·d̃ + n·r̃`. Dividing by `m·n` gives the
//! sampling-rate lower bound plotted next to recovery curves.

use serde::Serialize;

use crate::error::{Error, Result};

/// Exact `C(n, k)`; `0` when `k > n`.
pub fn binom(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiply.
        acc = acc
            .checked_mul((n - i) as u128)
            .ok_or(Error::Overflow { n, k })?
            / (i as u128 + 1);
    }
    Ok(acc)
}

fn binom_reaches(o: u64, q: u64, target: u128) -> bool {
    // An overflowing coefficient certainly exceeds any u64 target.
    binom(o + q, q).map_or(true, |c| c >= target)
}

/// `min{o : C(o+q, q) ≥ d̃}`, searched in the window
/// `[(q!·d̃)^{1/q} − q, (q!·d̃)^{1/q}]`.
pub fn r_tilde(d_tilde: u64, q: u32) -> Result<u64> {
    if d_tilde == 0 || q == 0 {
        return Err(Error::invalid("r_tilde needs d_tilde >= 1 and q >= 1"));
    }
    let q64 = q as u64;
    let target = d_tilde as u128;
    let (lo, hi) = remark_bracket(d_tilde, q);
    // one unit of slack each side absorbs floating error in the root
    let start = (lo.floor() - 1.0).max(0.0) as u64;
    let stop = hi.ceil() as u64 + 1;
    let found = (start..=stop).find(|&o| binom_reaches(o, q64, target));
    match found {
        Some(o) if o == 0 || !binom_reaches(o - 1, q64, target) => Ok(o),
        _ => Ok(r_tilde_scan(d_tilde, q)),
    }
}

/// Exhaustive scan from `o = 0`; the reference for [`r_tilde`].
pub fn r_tilde_scan(d_tilde: u64, q: u32) -> u64 {
    (0..)
        .find(|&o| binom_reaches(o, q as u64, d_tilde as u128))
        .expect("binomial grows without bound")
}

/// `((q!·d̃)^{1/q} − q, (q!·d̃)^{1/q})`.
pub fn remark_bracket(d_tilde: u64, q: u32) -> (f64, f64) {
    let log_fact: f64 = (1..=q).map(|i| (i as f64).ln()).sum();
    let root = ((log_fact + (d_tilde as f64).ln()) / q as f64).exp();
    (root - q as f64, root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComplexityInput {
    pub m: u64,
    pub n: u64,
    pub d: u64,
    pub alpha: u64,
    pub q: u32,
    pub k: u64,
    /// Numerically known feature-space rank; replaces the generic bound.
    pub d_tilde_override: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub d_tilde: u64,
    pub r_tilde: u64,
    /// Rank of the data matrix itself, `min{k·C(d+α, α), m, n}`.
    pub rank: u64,
    pub mnp_phi: u64,
    pub mnp_linear: u64,
    pub sampling_lower_bound: f64,
}

fn to_u64(v: u128) -> u64 {
    u64::try_from(v).unwrap_or(u64::MAX)
}

/// Feature-space rank bound and parameter counts for an `m × n` matrix whose
/// columns come from `k` degree-`α` polynomial maps of a `d`-dimensional latent.
pub fn complexity_report(input: &ComplexityInput) -> Result<ComplexityReport> {
    let ComplexityInput {
        m,
        n,
        d,
        alpha,
        q,
        k,
        d_tilde_override,
    } = *input;
    if m == 0 || n == 0 || q == 0 || k == 0 {
        return Err(Error::invalid("m, n, q and k must be positive"));
    }
    let q64 = q as u64;
    let feature_dim = to_u64(binom(m + q64, q64).unwrap_or(u128::MAX));
    let d_tilde = match d_tilde_override {
        Some(0) => return Err(Error::invalid("d_tilde override must be >= 1")),
        Some(v) => v,
        None => {
            if d == 0 || alpha == 0 {
                return Err(Error::invalid("d and alpha must be positive without a d_tilde override"));
            }
            let aq = alpha * q64;
            let per = binom(d + aq, aq).unwrap_or(u128::MAX);
            let bound = to_u64(per.saturating_mul(k as u128));
            bound.min(feature_dim).min(n)
        }
    };
    let r_t = r_tilde(d_tilde, q)?;
    let rank = if d == 0 || alpha == 0 {
        m.min(n)
    } else {
        to_u64(binom(d + alpha, alpha).unwrap_or(u128::MAX).saturating_mul(k as u128))
            .min(m)
            .min(n)
    };
    let mnp_phi = m.saturating_sub(r_t) * d_tilde + n * r_t;
    let mnp_linear = (m - rank) * rank + n * rank;
    let sampling_lower_bound = (mnp_phi as f64 / (m as f64 * n as f64)).min(1.0);
    Ok(ComplexityReport {
        d_tilde,
        r_tilde: r_t,
        rank,
        mnp_phi,
        mnp_linear,
        sampling_lower_bound,
    })
}
