//! Nuclear-norm low-rank matrix completion by iterative singular-value
//! soft-thresholding (soft-impute) with a decreasing threshold.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::masked::MaskedMatrix;
use crate::solver::{CompletionResult, Termination};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrinkage {
    Fixed(f64),
    /// Start at `σ_max(P_Ω(X))/50` and halve on every plateau.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrmcConfig {
    pub shrinkage: Shrinkage,
    pub max_iters: usize,
    pub tol: f64,
    /// Relaxation of each update, in `(0, 1]`.
    pub step: f64,
}

impl Default for LrmcConfig {
    fn default() -> Self {
        Self {
            shrinkage: Shrinkage::Auto,
            max_iters: 5000,
            tol: 1e-7,
            step: 1.0,
        }
    }
}

/// Auto thresholds stop halving once they drop below `τ₀ · AUTO_FLOOR`.
const AUTO_FLOOR: f64 = 1e-4;

impl LrmcConfig {
    fn validate(&self) -> Result<()> {
        if let Shrinkage::Fixed(t) = self.shrinkage {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("shrinkage {t} must be positive")));
            }
        }
        if self.max_iters == 0 || !(self.tol > 0.0) || !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::Config(
                "LRMC needs max_iters >= 1, tol > 0 and step in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// `U · diag(max(σ − τ, 0)) · Vᵀ`, plus the shrunk singular values.
pub fn singular_value_shrink(y: &DMatrix<f64>, tau: f64) -> (DMatrix<f64>, DVector<f64>) {
    let svd = y.clone().svd(true, true);
    let shrunk = svd.singular_values.map(|s| (s - tau).max(0.0));
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut us = u;
    for (i, mut col) in us.column_iter_mut().enumerate() {
        col *= shrunk[i];
    }
    (us * vt, shrunk)
}

fn nuclear_norm(y: &DMatrix<f64>) -> f64 {
    y.clone().singular_values().sum()
}

pub fn solve_lrmc(input: &MaskedMatrix, cfg: &LrmcConfig) -> Result<CompletionResult> {
    cfg.validate()?;
    let observed = input.zero_filled();
    let mask = input.mask();
    if input.missing_count() == 0 {
        return Ok(CompletionResult {
            x_hat: observed.clone(),
            objective_trace: Vec::new(),
            iterations: 0,
            termination: Termination::Tolerance,
            final_step: 0.0,
            final_objective: nuclear_norm(observed),
            kernel: None,
        });
    }
    let sigma_max = observed.clone().singular_values().max();
    let (mut tau, tau_min) = match cfg.shrinkage {
        Shrinkage::Fixed(t) => (t, t),
        Shrinkage::Auto => {
            let t0 = (sigma_max / 50.0).max(f64::MIN_POSITIVE);
            (t0, t0 * AUTO_FLOOR)
        }
    };

    let mut z = observed.clone();
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIter;
    for it in 1..=cfg.max_iters {
        let feasible = z.zip_zip_map(observed, mask, |zv, ov, m| if m { ov } else { zv });
        let (shrunk, _) = singular_value_shrink(&feasible, tau);
        let next = &z * (1.0 - cfg.step) + shrunk * cfg.step;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                last_finite: Box::new(project(&z, input)),
            });
        }
        trace.push(nuclear_norm(&feasible));
        let change = (&next - &z).norm() / z.norm().max(f64::MIN_POSITIVE);
        z = next;
        if change < cfg.tol {
            if tau > tau_min {
                tau = (tau * 0.5).max(tau_min);
            } else {
                termination = Termination::Tolerance;
                break;
            }
        }
    }
    let x_hat = project(&z, input);
    Ok(CompletionResult {
        final_objective: nuclear_norm(&x_hat),
        x_hat,
        iterations: trace.len(),
        objective_trace: trace,
        termination,
        final_step: tau,
        kernel: None,
    })
}

fn project(z: &DMatrix<f64>, input: &MaskedMatrix) -> DMatrix<f64> {
    z.zip_zip_map(input.zero_filled(), input.mask(), |zv, ov, m| if m { ov } else { zv })
}
