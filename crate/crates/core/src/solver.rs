//! Adam with multiplicative step adaptation ("Adam+") driving the
//! alternating majorize/gradient scheme on the unknown entries.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::masked::MaskedMatrix;
use crate::objectives::{
    anchored_step, apply_mask, inverse_sigma_weights, Fit, RelaxationKind, RelaxationSpec,
    WeightRule,
};
use crate::spectral::sym_eig;

/// How observed entries enter the problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMode {
    /// Observed entries are fixed; only missing entries move.
    Hard,
    /// Every entry moves; observed residuals cost `(λ/2)·‖P_Ω(X̂ − X)‖²`.
    Soft { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zero,
    ColumnMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub relaxation: RelaxationSpec,
    pub kernel: KernelSpec,
    pub mode: FitMode,
    pub init: Init,
    /// Initial Adam step size.
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Eigenvalue floor for negative spectral powers.
    pub floor: f64,
    /// Stop once the largest parameter change falls below this.
    pub tol: f64,
    pub t_max: usize,
    pub step_down: f64,
    pub step_up: f64,
    /// Recorded with results; the solver itself is deterministic.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            relaxation: RelaxationSpec::default(),
            kernel: KernelSpec::default(),
            mode: FitMode::Hard,
            init: Init::Zero,
            step: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            floor: 1e-6,
            tol: 1e-6,
            t_max: 1000,
            step_down: 0.8,
            step_up: 1.1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0 < self.beta1 && self.beta1 < self.beta2 && self.beta2 < 1.0) {
            return bad("need 0 < beta1 < beta2 < 1");
        }
        if !(self.floor > 0.0 && self.tol > 0.0 && self.adam_eps > 0.0) {
            return bad("floor, tol and adam_eps must be positive");
        }
        if !(0.0 < self.step_down && self.step_down < 1.0 && self.step_up > 1.0) {
            return bad("need 0 < step_down < 1 < step_up");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if self.t_max == 0 {
            return bad("t_max must be >= 1");
        }
        if let FitMode::Soft { lambda } = self.mode {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return bad("soft-mode lambda must be positive");
            }
        }
        self.kernel.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub x_hat: DMatrix<f64>,
    /// Objective evaluated at the start of each iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub final_step: f64,
    /// Objective at the returned iterate.
    pub final_objective: f64,
    /// Kernel actually used (bandwidth resolved).
    pub kernel: Option<Kernel>,
}

/// Adam moments plus the adaptive step.
#[derive(Debug, Clone)]
pub struct AdamPlus {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
    pub step: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_down: f64,
    step_up: f64,
    last_objective: Option<f64>,
}

impl AdamPlus {
    pub fn new(dim: usize, cfg: &SolverConfig) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            step: cfg.step,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step_down: cfg.step_down,
            step_up: cfg.step_up,
            last_objective: None,
        }
    }

    /// One moment update; returns the parameter delta `−step·m̂/(√υ̂ + ϵ)`.
    pub fn step(&mut self, grads: &[f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.m.len(), "gradient length mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut delta = Vec::with_capacity(grads.len());
        for ((m, v), &g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grads) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            delta.push(-self.step * m_hat / (v_hat.sqrt() + self.eps));
        }
        delta
    }

    /// Shrink the step if the objective rose since the last call, grow it
    /// otherwise. The first call only records the objective.
    pub fn adapt(&mut self, objective: f64) {
        if let Some(prev) = self.last_objective {
            if objective > prev {
                self.step *= self.step_down;
            } else {
                self.step *= self.step_up;
            }
        }
        self.last_objective = Some(objective);
    }
}

/// Per-iteration view handed to observers.
pub struct IterationState<'a> {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
    pub x_hat: &'a DMatrix<f64>,
}

pub fn solve_pmc(input: &MaskedMatrix, cfg: &SolverConfig) -> Result<CompletionResult> {
    solve_pmc_observed(input, cfg, |_| {})
}

/// [`solve_pmc`] with a callback after every parameter update.
pub fn solve_pmc_observed<F>(
    input: &MaskedMatrix,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<CompletionResult>
where
    F: FnMut(&IterationState<'_>),
{
    cfg.validate()?;
    if cfg.mode == FitMode::Hard && input.missing_count() == 0 {
        return Err(Error::NothingToComplete);
    }
    let n = input.ncols();
    let x0 = match cfg.init {
        Init::Zero => input.zero_filled().clone(),
        Init::ColumnMean => input.column_mean_filled(),
    };
    let kernel = cfg.kernel.resolve(&x0)?;

    let relaxation = match &cfg.relaxation.kind {
        RelaxationKind::Weighted {
            rule: WeightRule::InverseSigma { eps },
        } => {
            cfg.relaxation.validate(n)?;
            let weights = preliminary_weights(input, cfg, &kernel, *eps)?;
            RelaxationSpec::weighted(cfg.relaxation.p, WeightRule::Given(weights))
        }
        _ => cfg.relaxation.clone(),
    };
    relaxation.validate(n)?;
    run(input, cfg, &kernel, &relaxation, x0, &mut observer)
}

fn preliminary_weights(
    input: &MaskedMatrix,
    cfg: &SolverConfig,
    kernel: &Kernel,
    eps: f64,
) -> Result<Vec<f64>> {
    let p = cfg.relaxation.p;
    let x0 = match cfg.init {
        Init::Zero => input.zero_filled().clone(),
        Init::ColumnMean => input.column_mean_filled(),
    };
    let pre = run(input, cfg, kernel, &RelaxationSpec::schatten(p), x0, &mut |_| {})?;
    let eig = sym_eig(&kernel.gram(&pre.x_hat))?;
    let sigma: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    log::debug!("inverse-sigma weights from a {}-iteration Schatten solve", pre.iterations);
    Ok(inverse_sigma_weights(&sigma, p, eps))
}

fn objective(
    x: &DMatrix<f64>,
    kernel: &Kernel,
    spec: &RelaxationSpec,
    floor: f64,
    fit: Option<Fit<'_>>,
    mask: &DMatrix<bool>,
) -> Result<(f64, crate::objectives::AnchoredStep)> {
    let eig = sym_eig(&kernel.gram(x))?;
    let step = anchored_step(&eig, spec, floor)?;
    let fit_value = fit.map_or(0.0, |f| f.value(x, mask));
    Ok((step.value + fit_value, step))
}

fn run<F>(
    input: &MaskedMatrix,
    cfg: &SolverConfig,
    kernel: &Kernel,
    spec: &RelaxationSpec,
    mut x_hat: DMatrix<f64>,
    observer: &mut F,
) -> Result<CompletionResult>
where
    F: FnMut(&IterationState<'_>),
{
    let mask = input.mask();
    let fit = match cfg.mode {
        FitMode::Hard => None,
        FitMode::Soft { lambda } => Some(Fit {
            lambda,
            observed: input.zero_filled(),
        }),
    };
    let free: Vec<usize> = match cfg.mode {
        FitMode::Hard => (0..mask.len()).filter(|&i| !mask[i]).collect(),
        FitMode::Soft { .. } => (0..mask.len()).collect(),
    };
    let mut adam = AdamPlus::new(free.len(), cfg);
    let mut trace = Vec::new();
    let mut previous = x_hat.clone();
    let mut termination = Termination::MaxIter;

    for t in 1..=cfg.t_max {
        let (value, step) = match objective(&x_hat, kernel, spec, cfg.floor, fit, mask) {
            Ok(v) => v,
            Err(Error::InvalidInput(_)) => {
                return Err(Error::Diverged {
                    iteration: t,
                    last_finite: Box::new(previous),
                })
            }
            Err(e) => return Err(e),
        };
        if !value.is_finite() {
            return Err(Error::Diverged {
                iteration: t,
                last_finite: Box::new(previous),
            });
        }
        trace.push(value);
        // L(X̂_{t−1}) against L(X̂_{t−2}): adapts the step before it is used.
        adam.adapt(value);

        let grad = kernel.grad_adjoint(&x_hat, &step.kernel_gradient)?;
        let grad = apply_mask(grad, &x_hat, mask, fit);
        let g: Vec<f64> = free.iter().map(|&i| grad[i]).collect();
        let delta = adam.step(&g);

        previous.copy_from(&x_hat);
        let mut max_change = 0.0_f64;
        for (&i, d) in free.iter().zip(&delta) {
            x_hat[i] += d;
            max_change = max_change.max(d.abs());
        }
        observer(&IterationState {
            iteration: t,
            objective: value,
            step: adam.step,
            x_hat: &x_hat,
        });
        if !max_change.is_finite() {
            return Err(Error::Diverged {
                iteration: t,
                last_finite: Box::new(previous),
            });
        }
        if max_change < cfg.tol {
            termination = Termination::Tolerance;
            break;
        }
    }

    let iterations = trace.len();
    let final_objective = match objective(&x_hat, kernel, spec, cfg.floor, fit, mask) {
        Ok((v, _)) if v.is_finite() => v,
        _ => {
            return Err(Error::Diverged {
                iteration: iterations,
                last_finite: Box::new(previous),
            })
        }
    };
    log::debug!(
        "solve finished after {iterations} iterations ({termination:?}), objective {:.6e} -> {:.6e}",
        trace[0],
        final_objective
    );
    Ok(CompletionResult {
        x_hat,
        objective_trace: trace,
        iterations,
        termination,
        final_step: adam.step,
        final_objective,
        kernel: Some(*kernel),
    })
}
