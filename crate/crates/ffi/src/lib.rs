//! C interface to `polymc`.
//!
//! Matrices cross the boundary as row-major `double` arrays with `NaN`
//! marking missing cells. Inputs and results are opaque handles owned by
//! the caller and released with the matching `*_free` function. Every
//! fallible call returns a [`PolymcStatus`]; the message of the last failure
//! on the calling thread is available from [`polymc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use polymc::complexity::{complexity_report, r_tilde, ComplexityInput};
use polymc::objectives::{RelaxationSpec, WeightRule};
use polymc::solver::{solve_pmc, CompletionResult, FitMode, SolverConfig};
use polymc::{Error, KernelSpec, MaskedMatrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolymcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NothingToComplete = 4,
    SolverFailure = 5,
    Config = 6,
    Overflow = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolymcRelaxation {
    /// Schatten-p of the feature matrix.
    Schatten = 0,
    /// Schatten-p of all but the `s` largest singular values.
    Truncated = 1,
    /// Weighted Schatten-p with nondecreasing weights.
    Weighted = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolymcWeights {
    Linear = 0,
    InverseSigma = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolymcKernel {
    Rbf = 0,
    Polynomial = 1,
}

/// Solver options. Obtain defaults from [`polymc_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PolymcConfig {
    pub relaxation: PolymcRelaxation,
    pub p: f64,
    /// Truncation for `Truncated`; 0 means the number of rows.
    pub s: usize,
    pub weights: PolymcWeights,
    pub kernel: PolymcKernel,
    pub poly_order: u32,
    pub poly_offset: f64,
    /// Fixed RBF bandwidth; 0 or less selects the automatic rule.
    pub sigma: f64,
    pub sigma_scale: f64,
    /// Nonzero fits observed cells with penalty `lambda` instead of fixing them.
    pub soft: u8,
    pub lambda: f64,
    pub step: f64,
    pub tol: f64,
    pub t_max: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PolymcComplexityInput {
    pub m: u64,
    pub n: u64,
    pub d: u64,
    pub alpha: u64,
    pub q: u32,
    pub k: u64,
    /// Known feature-space rank; 0 uses the generic bound.
    pub d_tilde: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PolymcComplexityReport {
    pub d_tilde: u64,
    pub r_tilde: u64,
    pub rank: u64,
    pub mnp_phi: u64,
    pub mnp_linear: u64,
    pub sampling_lower_bound: f64,
}

/// Matrix with missing cells.
pub struct PolymcMatrix(MaskedMatrix);

/// Completed matrix and solver diagnostics.
pub struct PolymcResult(CompletionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PolymcStatus {
    match err {
        Error::InvalidInput(_) | Error::Parse { .. } | Error::Io { .. } | Error::ZeroDenominator(_) => {
            PolymcStatus::InvalidInput
        }
        Error::DimensionMismatch(_) => PolymcStatus::DimensionMismatch,
        Error::NothingToComplete => PolymcStatus::NothingToComplete,
        Error::Singular { .. } | Error::Diverged { .. } => PolymcStatus::SolverFailure,
        Error::Config(_) | Error::FeatureMapTooLarge { .. } => PolymcStatus::Config,
        Error::Overflow { .. } => PolymcStatus::Overflow,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PolymcStatus, String)>) -> PolymcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PolymcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PolymcStatus::Panic
        }
    }
}

fn lib(err: Error) -> (PolymcStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (PolymcStatus, String) {
    (PolymcStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn polymc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Build a matrix from `rows * cols` row-major values; `NaN` marks missing.
///
/// # Safety
/// `values` must point to `rows * cols` readable doubles and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn polymc_matrix_new(
    rows: usize,
    cols: usize,
    values: *const f64,
    out: *mut *mut PolymcMatrix,
) -> PolymcStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l > 0)
            .ok_or_else(|| (PolymcStatus::InvalidInput, "matrix must be non-empty".to_string()))?;
        let data = std::slice::from_raw_parts(values, len);
        let vals = DMatrix::from_row_slice(rows, cols, data);
        let mask = vals.map(|v| !v.is_nan());
        let m = MaskedMatrix::new(vals.map(|v| if v.is_nan() { 0.0 } else { v }), mask).map_err(lib)?;
        *out = Box::into_raw(Box::new(PolymcMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from [`polymc_matrix_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn polymc_matrix_free(m: *mut PolymcMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live matrix handle or null.
#[no_mangle]
pub unsafe extern "C" fn polymc_matrix_missing_count(m: *const PolymcMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.missing_count())
}

#[no_mangle]
pub extern "C" fn polymc_config_default() -> PolymcConfig {
    let d = SolverConfig::default();
    PolymcConfig {
        relaxation: PolymcRelaxation::Weighted,
        p: d.relaxation.p,
        s: 0,
        weights: PolymcWeights::Linear,
        kernel: PolymcKernel::Rbf,
        poly_order: 2,
        poly_offset: 1.0,
        sigma: 0.0,
        sigma_scale: 1.0,
        soft: 0,
        lambda: 1.0,
        step: d.step,
        tol: d.tol,
        t_max: d.t_max,
        seed: d.seed,
    }
}

fn solver_config(c: &PolymcConfig, rows: usize) -> SolverConfig {
    let relaxation = match c.relaxation {
        PolymcRelaxation::Schatten => RelaxationSpec::schatten(c.p),
        PolymcRelaxation::Truncated => {
            RelaxationSpec::truncated(c.p, if c.s == 0 { rows } else { c.s })
        }
        PolymcRelaxation::Weighted => RelaxationSpec::weighted(
            c.p,
            match c.weights {
                PolymcWeights::Linear => WeightRule::Linear,
                PolymcWeights::InverseSigma => WeightRule::InverseSigma { eps: 1e-6 },
            },
        ),
    };
    let kernel = match c.kernel {
        PolymcKernel::Polynomial => KernelSpec::polynomial(c.poly_order, c.poly_offset),
        PolymcKernel::Rbf if c.sigma > 0.0 => KernelSpec::rbf(c.sigma),
        PolymcKernel::Rbf => KernelSpec::rbf_auto(c.sigma_scale),
    };
    SolverConfig {
        relaxation,
        kernel,
        mode: if c.soft != 0 {
            FitMode::Soft { lambda: c.lambda }
        } else {
            FitMode::Hard
        },
        step: c.step,
        tol: c.tol,
        t_max: c.t_max,
        seed: c.seed,
        ..SolverConfig::default()
    }
}

/// Complete `input`. A null `config` uses the defaults.
///
/// # Safety
/// `input` must be a live matrix handle, `config` null or valid, and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn polymc_complete(
    input: *const PolymcMatrix,
    config: *const PolymcConfig,
    out: *mut *mut PolymcResult,
) -> PolymcStatus {
    guard(|| {
        let input = input.as_ref().ok_or_else(|| null("input"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config.as_ref().copied().unwrap_or_else(|| polymc_config_default());
        let res = solve_pmc(&input.0, &solver_config(&cfg, input.0.nrows())).map_err(lib)?;
        *out = Box::into_raw(Box::new(PolymcResult(res)));
        Ok(())
    })
}

/// # Safety
/// `r` must come from [`polymc_complete`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn polymc_result_free(r: *mut PolymcResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `r` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn polymc_result_rows(r: *const PolymcResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.x_hat.nrows())
}

/// # Safety
/// `r` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn polymc_result_cols(r: *const PolymcResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.x_hat.ncols())
}

/// # Safety
/// `r` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn polymc_result_iterations(r: *const PolymcResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.iterations)
}

/// Objective at the returned matrix; NaN for a null handle.
///
/// # Safety
/// `r` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn polymc_result_objective(r: *const PolymcResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.final_objective)
}

/// # Safety
/// `r` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn polymc_result_trace_len(r: *const PolymcResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.objective_trace.len())
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), (PolymcStatus, String)> {
    if dst.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err((
            PolymcStatus::DimensionMismatch,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copy the completed matrix, row-major, into `buf` of length `len`.
///
/// # Safety
/// `r` must be a live result handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn polymc_result_matrix(r: *const PolymcResult, buf: *mut f64, len: usize) -> PolymcStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        let row_major: Vec<f64> = r.0.x_hat.transpose().iter().copied().collect();
        copy_out(&row_major, buf, len)
    })
}

/// Copy the per-iteration objective values into `buf` of length `len`.
///
/// # Safety
/// `r` must be a live result handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn polymc_result_trace(r: *const PolymcResult, buf: *mut f64, len: usize) -> PolymcStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.0.objective_trace, buf, len)
    })
}

/// Smallest `o` with `C(o + q, q) >= d_tilde`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn polymc_r_tilde(d_tilde: u64, q: u32, out: *mut u64) -> PolymcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r_tilde(d_tilde, q).map_err(lib)?;
        Ok(())
    })
}

/// # Safety
/// `input` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn polymc_complexity(
    input: *const PolymcComplexityInput,
    out: *mut PolymcComplexityReport,
) -> PolymcStatus {
    guard(|| {
        let i = input.as_ref().ok_or_else(|| null("input"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = complexity_report(&ComplexityInput {
            m: i.m,
            n: i.n,
            d: i.d,
            alpha: i.alpha,
            q: i.q,
            k: i.k,
            d_tilde_override: (i.d_tilde > 0).then_some(i.d_tilde),
        })
        .map_err(lib)?;
        *out = PolymcComplexityReport {
            d_tilde: r.d_tilde,
            r_tilde: r.r_tilde,
            rank: r.rank,
            mnp_phi: r.mnp_phi,
            mnp_linear: r.mnp_linear,
            sampling_lower_bound: r.sampling_lower_bound,
        };
        Ok(())
    })
}
