//! Rank surrogates on the kernel Gram matrix and their majorizers.
//!
//! With `σ_i = sqrt(λ_i(K))` the singular values of the implicit feature
//! matrix, the three surrogates are
//!
//! * `Schatten`:  `Σ σ_i^p = Tr(K^{p/2})`
//! * `Truncated`: `Σ_{i>s} σ_i^p = Tr(K^{p/2}) − max_{PᵀP=I} Tr((PᵀKP)^{p/2})`
//! * `Weighted`:  `Σ w_i σ_i^p = min_{Q orthogonal} Tr((W^{1/p}QᵀKQW^{1/p})^{p/2})`
//!
//! The alternating scheme fixes the maximizing `P` or minimizing `Q` (the
//! [`Majorant`]) from the current Gram matrix, then takes a gradient step on
//! the completed matrix with that factor held fixed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::spectral::{clamped_power, sym_eig, EigenDecomp};

#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// Explicit nondecreasing, nonnegative weights, one per column.
    Given(Vec<f64>),
    /// `w = (1/n, 2/n, …, 1)`.
    Linear,
    /// `w_i = 1/(σ_i^p + ε)` from singular values of a preliminary
    /// Schatten-p solve. Must be turned into `Given` before use.
    InverseSigma { eps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RelaxationKind {
    Schatten,
    Truncated { s: usize },
    Weighted { rule: WeightRule },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationSpec {
    pub kind: RelaxationKind,
    /// Schatten exponent in `(0, 1]`.
    pub p: f64,
}

impl Default for RelaxationSpec {
    fn default() -> Self {
        Self {
            kind: RelaxationKind::Weighted {
                rule: WeightRule::Linear,
            },
            p: 0.5,
        }
    }
}

impl RelaxationSpec {
    pub fn schatten(p: f64) -> Self {
        Self {
            kind: RelaxationKind::Schatten,
            p,
        }
    }

    pub fn truncated(p: f64, s: usize) -> Self {
        Self {
            kind: RelaxationKind::Truncated { s },
            p,
        }
    }

    pub fn weighted(p: f64, rule: WeightRule) -> Self {
        Self {
            kind: RelaxationKind::Weighted { rule },
            p,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::invalid(format!("p = {} must lie in (0, 1]", self.p)));
        }
        match &self.kind {
            RelaxationKind::Schatten => {}
            RelaxationKind::Truncated { s } => {
                if *s >= n {
                    return Err(Error::invalid(format!(
                        "truncation s = {s} must be smaller than n = {n}"
                    )));
                }
            }
            RelaxationKind::Weighted { rule } => match rule {
                WeightRule::Given(w) => check_weights(w, n)?,
                WeightRule::Linear => {}
                WeightRule::InverseSigma { eps } => {
                    if !(*eps > 0.0) {
                        return Err(Error::invalid("inverse-sigma epsilon must be > 0"));
                    }
                }
            },
        }
        Ok(())
    }

    /// Weight vector for `n` columns (weighted surrogate only).
    pub fn weights(&self, n: usize) -> Result<Option<Vec<f64>>> {
        match &self.kind {
            RelaxationKind::Weighted { rule } => match rule {
                WeightRule::Given(w) => {
                    check_weights(w, n)?;
                    Ok(Some(w.clone()))
                }
                WeightRule::Linear => Ok(Some(linear_weights(n))),
                WeightRule::InverseSigma { .. } => Err(Error::invalid(
                    "inverse-sigma weights are unresolved; derive them from a preliminary solve",
                )),
            },
            _ => Ok(None),
        }
    }
}

fn check_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::dims(format!("{} weights for {n} columns", w.len())));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    if w.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::invalid("weights must be nondecreasing"));
    }
    Ok(())
}

pub fn linear_weights(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

/// `w_i = 1/(σ_i^p + ε)`, returned in ascending order so that the largest
/// singular value receives the smallest weight.
pub fn inverse_sigma_weights(singular_values: &[f64], p: f64, eps: f64) -> Vec<f64> {
    let mut w: Vec<f64> = singular_values
        .iter()
        .map(|s| 1.0 / (s.max(0.0).powf(p) + eps))
        .collect();
    w.sort_by(f64::total_cmp);
    w
}

/// Relaxation value from eigenvalues of `K` (descending).
pub fn relaxation_value_of(eig: &EigenDecomp, spec: &RelaxationSpec) -> Result<f64> {
    let n = eig.dim();
    spec.validate(n)?;
    let half = spec.p / 2.0;
    let sp = |l: f64| clamped_power(l, half, 0.0);
    let lam = eig.eigenvalues.as_slice();
    Ok(match &spec.kind {
        RelaxationKind::Schatten => lam.iter().map(|&l| sp(l)).sum(),
        RelaxationKind::Truncated { s } => lam[*s..].iter().map(|&l| sp(l)).sum(),
        RelaxationKind::Weighted { .. } => {
            let w = spec.weights(n)?.expect("weighted");
            lam.iter().zip(&w).map(|(&l, wi)| wi * sp(l)).sum()
        }
    })
}

/// `Σ σ_i^p`, `Σ_{i>s} σ_i^p` or `Σ w_i σ_i^p` for PSD `K`.
pub fn relaxation_value(k: &DMatrix<f64>, spec: &RelaxationSpec) -> Result<f64> {
    relaxation_value_of(&sym_eig(k)?, spec)
}

/// Auxiliary factor held fixed during a gradient phase.
#[derive(Debug, Clone)]
pub enum Majorant {
    Schatten { n: usize },
    /// `P`: eigenvectors of the `s` largest eigenvalues, `n × s`.
    Truncated { basis: DMatrix<f64> },
    /// `Q`: all eigenvectors in descending order, and `Θ = Q·W^{1/p}`.
    Weighted {
        rotation: DMatrix<f64>,
        theta: DMatrix<f64>,
    },
}

impl Majorant {
    pub fn dim(&self) -> usize {
        match self {
            Majorant::Schatten { n } => *n,
            Majorant::Truncated { basis } => basis.nrows(),
            Majorant::Weighted { rotation, .. } => rotation.nrows(),
        }
    }

    /// `Θ`; empty for the Schatten surrogate.
    pub fn theta(&self) -> DMatrix<f64> {
        match self {
            Majorant::Schatten { n } => DMatrix::zeros(*n, 0),
            Majorant::Truncated { basis } => basis.clone(),
            Majorant::Weighted { theta, .. } => theta.clone(),
        }
    }

    fn check(&self, spec: &RelaxationSpec, n: usize) -> Result<()> {
        let ok = match (self, &spec.kind) {
            (Majorant::Schatten { .. }, RelaxationKind::Schatten) => true,
            (Majorant::Truncated { basis }, RelaxationKind::Truncated { s }) => basis.ncols() == *s,
            (Majorant::Weighted { theta, .. }, RelaxationKind::Weighted { .. }) => theta.ncols() == n,
            _ => false,
        };
        if !ok || self.dim() != n {
            return Err(Error::dims(format!(
                "majorant does not match a {n}x{n} Gram matrix under {:?}",
                spec.kind
            )));
        }
        Ok(())
    }
}

pub fn compute_majorant_from(eig: &EigenDecomp, spec: &RelaxationSpec) -> Result<Majorant> {
    let n = eig.dim();
    spec.validate(n)?;
    Ok(match &spec.kind {
        RelaxationKind::Schatten => Majorant::Schatten { n },
        RelaxationKind::Truncated { s } => Majorant::Truncated {
            basis: eig.leading_vectors(*s),
        },
        RelaxationKind::Weighted { .. } => {
            let w = spec.weights(n)?.expect("weighted");
            let rotation = eig.eigenvectors.clone();
            let mut theta = rotation.clone();
            for (j, mut col) in theta.column_iter_mut().enumerate() {
                col *= w[j].powf(1.0 / spec.p);
            }
            Majorant::Weighted { rotation, theta }
        }
    })
}

pub fn compute_majorant(k: &DMatrix<f64>, spec: &RelaxationSpec) -> Result<Majorant> {
    compute_majorant_from(&sym_eig(k)?, spec)
}

fn trace_power(a: &DMatrix<f64>, exponent: f64) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(sym_eig(a)?
        .eigenvalues
        .iter()
        .map(|&l| clamped_power(l, exponent, 0.0))
        .sum())
}

/// Majorizer `L(K, Θ)` with `Θ` held fixed. Equals the relaxation value when
/// `Θ` was computed from the same `K`.
pub fn majorizer_value(k: &DMatrix<f64>, majorant: &Majorant, spec: &RelaxationSpec) -> Result<f64> {
    let n = k.nrows();
    majorant.check(spec, n)?;
    let half = spec.p / 2.0;
    match majorant {
        Majorant::Schatten { .. } => trace_power(k, half),
        Majorant::Truncated { basis } => {
            let inner = basis.tr_mul(&(k * basis));
            Ok(trace_power(k, half)? - trace_power(&inner, half)?)
        }
        Majorant::Weighted { theta, .. } => trace_power(&theta.tr_mul(&(k * theta)), half),
    }
}

/// `∂L/∂K` at `K` with `Θ` fixed. Negative powers use `floor`.
pub fn kernel_gradient(
    k: &DMatrix<f64>,
    majorant: &Majorant,
    spec: &RelaxationSpec,
    floor: f64,
) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    majorant.check(spec, n)?;
    if !(floor > 0.0) {
        return Err(Error::Singular {
            exponent: (spec.p - 2.0) / 2.0,
        });
    }
    let e = (spec.p - 2.0) / 2.0;
    let c = spec.p / 2.0;
    let k_part = |k: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        Ok(sym_eig(k)?.reconstruct_with(|l| c * clamped_power(l, e, floor)))
    };
    match majorant {
        Majorant::Schatten { .. } => k_part(k),
        Majorant::Truncated { basis } => {
            let h = k_part(&basis.tr_mul(&(k * basis)))?;
            Ok(k_part(k)? - basis * h * basis.transpose())
        }
        Majorant::Weighted { theta, .. } => {
            let m = k_part(&theta.tr_mul(&(k * theta)))?;
            Ok(theta * m * theta.transpose())
        }
    }
}

/// Soft-constraint data term `(λ/2)·‖P_Ω(X̂ − X)‖²`.
#[derive(Debug, Clone, Copy)]
pub struct Fit<'a> {
    pub lambda: f64,
    pub observed: &'a DMatrix<f64>,
}

impl Fit<'_> {
    pub fn value(&self, x_hat: &DMatrix<f64>, mask: &DMatrix<bool>) -> f64 {
        let mut acc = 0.0;
        for ((a, b), &m) in x_hat.iter().zip(self.observed.iter()).zip(mask.iter()) {
            if m {
                acc += (a - b) * (a - b);
            }
        }
        0.5 * self.lambda * acc
    }
}

/// `∇_X̂ L(X̂, Θ)` via the kernel adjoint.
///
/// Without `fit` the observed cells are fixed, so the gradient is zeroed
/// on Ω. With `fit` every cell is free and `λ·(X̂ − X)` is added on Ω.
pub fn majorizer_gradient(
    x_hat: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    kernel: &Kernel,
    majorant: &Majorant,
    spec: &RelaxationSpec,
    floor: f64,
    fit: Option<Fit<'_>>,
) -> Result<DMatrix<f64>> {
    if mask.shape() != x_hat.shape() {
        return Err(Error::dims("mask shape differs from the iterate"));
    }
    let k = kernel.gram(x_hat);
    let g = kernel_gradient(&k, majorant, spec, floor)?;
    let grad = kernel.grad_adjoint(x_hat, &g)?;
    Ok(apply_mask(grad, x_hat, mask, fit))
}

pub(crate) fn apply_mask(
    mut grad: DMatrix<f64>,
    x_hat: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    fit: Option<Fit<'_>>,
) -> DMatrix<f64> {
    for idx in 0..grad.len() {
        if mask[idx] {
            grad[idx] = match fit {
                Some(f) => grad[idx] + f.lambda * (x_hat[idx] - f.observed[idx]),
                None => 0.0,
            };
        }
    }
    grad
}

/// Value and `∂L/∂K` at the point the majorant is built from.
///
/// When `Θ` comes from the eigenvectors of the same `K`, `ΘᵀKΘ` is diagonal
/// and every spectral function collapses onto the eigenvalues of `K`, so one
/// decomposition serves the majorant, the value and the gradient.
#[derive(Debug, Clone)]
pub struct AnchoredStep {
    pub value: f64,
    pub kernel_gradient: DMatrix<f64>,
    pub majorant: Majorant,
}

pub fn anchored_step(
    eig: &EigenDecomp,
    spec: &RelaxationSpec,
    floor: f64,
) -> Result<AnchoredStep> {
    let n = eig.dim();
    spec.validate(n)?;
    let p = spec.p;
    let e = (p - 2.0) / 2.0;
    let c = p / 2.0;
    let lam = eig.eigenvalues.as_slice();
    let value = relaxation_value_of(eig, spec)?;
    let coeffs: Vec<f64> = match &spec.kind {
        RelaxationKind::Schatten => lam.iter().map(|&l| c * clamped_power(l, e, floor)).collect(),
        RelaxationKind::Truncated { s } => lam
            .iter()
            .enumerate()
            .map(|(i, &l)| if i < *s { 0.0 } else { c * clamped_power(l, e, floor) })
            .collect(),
        RelaxationKind::Weighted { .. } => {
            let w = spec.weights(n)?.expect("weighted");
            lam.iter()
                .zip(&w)
                .map(|(&l, &wi)| {
                    let scale = wi.powf(2.0 / p);
                    if scale == 0.0 {
                        0.0
                    } else {
                        c * scale * clamped_power(scale * l, e, floor)
                    }
                })
                .collect()
        }
    };
    let coeffs = DVector::from_vec(coeffs);
    let kernel_gradient = eig.reconstruct_with_index(|i| coeffs[i]);
    Ok(AnchoredStep {
        value,
        kernel_gradient,
        majorant: compute_majorant_from(eig, spec)?,
    })
}
