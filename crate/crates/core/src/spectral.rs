//! Symmetric eigendecomposition and spectral matrix functions.
//!
//! Every relaxation value and gradient in this crate is a function of the
//! spectrum of a kernel Gram matrix, so the helpers here all work on
//! symmetric input and return eigenpairs ordered by descending eigenvalue.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
///
/// Column `i` of `eigenvectors` pairs with `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomp {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        self.reconstruct_with_index(|i| f(self.eigenvalues[i]))
    }

    /// `V · diag(f(i)) · Vᵀ` where `f` sees the eigenpair index.
    pub fn reconstruct_with_index<F: Fn(usize) -> f64>(&self, f: F) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(i);
        }
        let mut out = scaled * self.eigenvectors.transpose();
        symmetrize_in_place(&mut out);
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(|l| l)
    }

    /// Leading `s` eigenvectors as an `n × s` matrix.
    pub fn leading_vectors(&self, s: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, s).into_owned()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()))
    }
}

pub(crate) fn ensure_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

pub(crate) fn symmetrize_in_place(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Eigendecomposition of `(A + Aᵀ)/2`, eigenvalues descending.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenDecomp> {
    if !a.is_square() {
        return Err(Error::dims(format!(
            "sym_eig expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "matrix")?;
    let mut sym = a.clone();
    symmetrize_in_place(&mut sym);
    let n = sym.nrows();
    if n == 0 {
        return Ok(EigenDecomp {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Raise eigenvalues clamped from below at `floor` to `exponent`.
///
/// Negative eigenvalues (numerical leakage of a PSD matrix) are clamped to
/// the floor as well.
pub fn clamped_power(lambda: f64, exponent: f64, floor: f64) -> f64 {
    let l = lambda.max(floor);
    if l == 0.0 {
        if exponent == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        l.powf(exponent)
    }
}

fn check_exponent(exponent: f64, floor: f64) -> Result<()> {
    if !exponent.is_finite() || !floor.is_finite() || floor < 0.0 {
        return Err(Error::invalid(format!(
            "exponent {exponent} / floor {floor} must be finite with floor >= 0"
        )));
    }
    if exponent < 0.0 && floor <= 0.0 {
        return Err(Error::Singular { exponent });
    }
    Ok(())
}

/// `A^e` for symmetric PSD `A`, computed as `V · diag(max(λ, floor)^e) · Vᵀ`.
pub fn spectral_power(a: &DMatrix<f64>, exponent: f64, floor: f64) -> Result<DMatrix<f64>> {
    check_exponent(exponent, floor)?;
    let eig = sym_eig(a)?;
    Ok(eig.reconstruct_with(|l| clamped_power(l, exponent, floor)))
}

/// Same as [`spectral_power`] but reusing an existing decomposition.
pub fn spectral_power_of(eig: &EigenDecomp, exponent: f64, floor: f64) -> Result<DMatrix<f64>> {
    check_exponent(exponent, floor)?;
    Ok(eig.reconstruct_with(|l| clamped_power(l, exponent, floor)))
}

/// Singular values of an arbitrary real matrix, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    ensure_finite(a, "matrix")?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut s = a.clone().singular_values();
    s.as_mut_slice().sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Number of singular values strictly above `rel_tol · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::invalid(format!("rel_tol {rel_tol} must lie in (0, 1)")));
    }
    let s = singular_values(a)?;
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rel_tol * smax).count())
}
