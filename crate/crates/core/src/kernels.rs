//! Kernel functions, Gram matrices and their adjoint gradients.
//!
//! Points are the *columns* of an `m × n` matrix. A [`KernelSpec`] is what a
//! user configures; it may leave the RBF bandwidth on `auto`, in which case
//! [`KernelSpec::resolve`] fixes it from data and yields a concrete
//! [`Kernel`] that can be evaluated.

use nalgebra::DMatrix;

use crate::complexity::binom;
use crate::error::{Error, Result};

/// Bandwidth of the RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// `σ² = scale · mean squared pairwise column distance`.
    Auto { scale: f64 },
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Auto { scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `k(x, y) = (xᵀy + offset)^order`
    Polynomial { order: u32, offset: f64 },
    /// `k(x, y) = exp(-‖x − y‖² / (2σ²))`
    Rbf { bandwidth: Bandwidth },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::default(),
        }
    }
}

impl KernelSpec {
    pub fn polynomial(order: u32, offset: f64) -> Self {
        KernelSpec::Polynomial { order, offset }
    }

    pub fn rbf(sigma: f64) -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Fixed(sigma),
        }
    }

    pub fn rbf_auto(scale: f64) -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Auto { scale },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Polynomial { order, offset } => {
                if order < 1 {
                    return Err(Error::invalid("polynomial order must be >= 1"));
                }
                if !(offset >= 0.0 && offset.is_finite()) {
                    return Err(Error::invalid(format!(
                        "polynomial offset {offset} must be finite and >= 0"
                    )));
                }
            }
            KernelSpec::Rbf { bandwidth } => match bandwidth {
                Bandwidth::Fixed(s) if !(s > 0.0 && s.is_finite()) => {
                    return Err(Error::invalid(format!("RBF bandwidth {s} must be > 0")));
                }
                Bandwidth::Auto { scale } if !(scale > 0.0 && scale.is_finite()) => {
                    return Err(Error::invalid(format!("auto-bandwidth scale {scale} must be > 0")));
                }
                _ => {}
            },
        }
        Ok(())
    }

    /// Fix every free parameter, estimating an `auto` bandwidth from `x`.
    pub fn resolve(&self, x: &DMatrix<f64>) -> Result<Kernel> {
        self.validate()?;
        Ok(match *self {
            KernelSpec::Polynomial { order, offset } => Kernel::Polynomial { order, offset },
            KernelSpec::Rbf { bandwidth } => Kernel::Rbf {
                sigma: match bandwidth {
                    Bandwidth::Fixed(s) => s,
                    Bandwidth::Auto { scale } => resolve_bandwidth(x, scale)?,
                },
            },
        })
    }
}

/// A kernel with every parameter fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Polynomial { order: u32, offset: f64 },
    Rbf { sigma: f64 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Polynomial { order, offset } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (dot + offset).powi(order as i32)
            }
            Kernel::Rbf { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// `K_ij = k(x_i, x_j)` over the columns of `x`.
    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let inner = x.tr_mul(x);
        match *self {
            Kernel::Polynomial { order, offset } => {
                let mut k = inner.map(|v| (v + offset).powi(order as i32));
                crate::spectral::symmetrize_in_place(&mut k);
                k
            }
            Kernel::Rbf { sigma } => rbf_from_inner(&inner, sigma),
        }
    }

    /// `∇_X Σ_ij G_ij K_ij(X)` for symmetric `g`.
    pub fn grad_adjoint(&self, x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = x.ncols();
        if g.nrows() != n || g.ncols() != n {
            return Err(Error::dims(format!(
                "adjoint weight is {}x{}, expected {n}x{n}",
                g.nrows(),
                g.ncols()
            )));
        }
        let inner = x.tr_mul(x);
        match *self {
            Kernel::Polynomial { order, offset } => {
                let a = order as f64;
                let h = DMatrix::from_fn(n, n, |i, j| {
                    let gs = 0.5 * (g[(i, j)] + g[(j, i)]);
                    gs * a * (inner[(i, j)] + offset).powi(order as i32 - 1)
                });
                Ok(x * h * 2.0)
            }
            Kernel::Rbf { sigma } => {
                let k = rbf_from_inner(&inner, sigma);
                let s = DMatrix::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]) * k[(i, j)]);
                let mut out = x * &s;
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    let row_sum: f64 = s.row(j).sum();
                    col.axpy(-row_sum, &x.column(j), 1.0);
                }
                Ok(out * (2.0 / (sigma * sigma)))
            }
        }
    }
}

fn rbf_from_inner(inner: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let n = inner.nrows();
    let denom = 2.0 * sigma * sigma;
    let mut k = DMatrix::from_element(n, n, 1.0);
    for j in 0..n {
        for i in (j + 1)..n {
            let d2 = (inner[(i, i)] + inner[(j, j)] - 2.0 * inner[(i, j)]).max(0.0);
            let v = (-d2 / denom).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Gram matrix of `x` under `spec`. Fails if the RBF bandwidth is still `auto`.
pub fn gram(x: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    Ok(concrete(spec)?.gram(x))
}

pub fn gram_grad_adjoint(
    x: &DMatrix<f64>,
    spec: &KernelSpec,
    g: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    concrete(spec)?.grad_adjoint(x, g)
}

fn concrete(spec: &KernelSpec) -> Result<Kernel> {
    spec.validate()?;
    match *spec {
        KernelSpec::Polynomial { order, offset } => Ok(Kernel::Polynomial { order, offset }),
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Fixed(sigma),
        } => Ok(Kernel::Rbf { sigma }),
        KernelSpec::Rbf { .. } => Err(Error::invalid(
            "RBF bandwidth is unresolved; call KernelSpec::resolve first",
        )),
    }
}

/// Auto bandwidth: `σ² = scale · mean_{i<j} ‖x_i − x_j‖²`.
///
/// Falls back to `σ = 1` when all columns coincide.
pub fn resolve_bandwidth(x: &DMatrix<f64>, scale: f64) -> Result<f64> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::invalid("bandwidth estimation needs at least two columns"));
    }
    crate::spectral::ensure_finite(x, "data")?;
    // Σ_{i<j} ‖x_i − x_j‖² = n Σ‖x_i‖² − ‖Σ x_i‖²
    let sum_sq: f64 = x.iter().map(|v| v * v).sum();
    let total = x.column_sum();
    let pair_sum = (n as f64 * sum_sq - total.norm_squared()).max(0.0);
    let mean = pair_sum / (n as f64 * (n as f64 - 1.0) / 2.0);
    let sigma2 = scale * mean;
    if !(sigma2 > f64::EPSILON * (1.0 + sum_sq)) {
        log::warn!("all columns identical; falling back to RBF bandwidth 1");
        return Ok(1.0);
    }
    Ok(sigma2.sqrt())
}

const FEATURE_MAP_LIMIT: usize = 100_000;

/// Explicit order-`q` polynomial feature map of `x` with multinomial weights.
///
/// The coefficient of monomial `x^μ` is `sqrt(q! / ((q−|μ|)! μ!) · b^(q−|μ|))`,
/// which makes `φ(x)ᵀφ(y) = (xᵀy + b)^q` exact. Output length is `C(m+q, q)`.
pub fn explicit_feature_map(x: &[f64], q: u32, offset: f64) -> Result<Vec<f64>> {
    let m = x.len();
    let too_large = Error::FeatureMapTooLarge {
        m,
        q,
        limit: FEATURE_MAP_LIMIT,
    };
    let len = match binom((m + q as usize) as u64, q as u64) {
        Ok(l) if l <= FEATURE_MAP_LIMIT as u128 => l as usize,
        _ => return Err(too_large),
    };
    if !(offset >= 0.0) {
        return Err(Error::invalid("feature map offset must be >= 0"));
    }
    let mut log_fact = vec![0.0_f64; q as usize + 1];
    for i in 1..=q as usize {
        log_fact[i] = log_fact[i - 1] + (i as f64).ln();
    }
    let mut out = Vec::with_capacity(len);
    let mut exps = vec![0u32; m];
    push_monomials(x, q, offset, &log_fact, 0, 0, &mut exps, &mut out);
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn push_monomials(
    x: &[f64],
    q: u32,
    offset: f64,
    log_fact: &[f64],
    var: usize,
    degree: u32,
    exps: &mut [u32],
    out: &mut Vec<f64>,
) {
    if var == x.len() {
        let rest = (q - degree) as usize;
        let mut log_coef = log_fact[q as usize] - log_fact[rest];
        let mut mono = 1.0;
        for (xi, &e) in x.iter().zip(exps.iter()) {
            log_coef -= log_fact[e as usize];
            mono *= xi.powi(e as i32);
        }
        let weight = (log_coef.exp() * offset.powi(rest as i32)).sqrt();
        out.push(weight * mono);
        return;
    }
    for e in 0..=(q - degree) {
        exps[var] = e;
        push_monomials(x, q, offset, log_fact, var + 1, degree + e, exps, out);
    }
    exps[var] = 0;
}

/// Explicit feature matrix: one column of [`explicit_feature_map`] per column of `x`.
pub fn explicit_feature_matrix(x: &DMatrix<f64>, q: u32, offset: f64) -> Result<DMatrix<f64>> {
    let cols = x
        .column_iter()
        .map(|c| explicit_feature_map(c.as_slice(), q, offset))
        .collect::<Result<Vec<_>>>()?;
    let l = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(l, cols.len(), |i, j| cols[j][i]))
}

/// RBF Gram approximated by its order-`q` truncated power series
/// `c_i c_j Σ_{t ≤ q} (x_iᵀx_j)^t / (σ^{2t} t!)` with `c_x = exp(−‖x‖²/(2σ²))`.
pub fn rbf_truncated_gram(x: &DMatrix<f64>, sigma: f64, q: u32) -> DMatrix<f64> {
    let inner = x.tr_mul(x);
    let n = x.ncols();
    let s2 = sigma * sigma;
    let c: Vec<f64> = (0..n).map(|i| (-inner[(i, i)] / (2.0 * s2)).exp()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let u = inner[(i, j)] / s2;
        let mut term = 1.0;
        let mut acc = 1.0;
        for t in 1..=q {
            term *= u / t as f64;
            acc += term;
        }
        c[i] * c[j] * acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sym_eig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let a = random(n, n, seed);
        &a + a.transpose()
    }

    /// Central differences of `Σ G_ij K_ij(X)` with respect to every entry.
    fn fd_adjoint(kernel: &Kernel, x: &DMatrix<f64>, g: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let f = |x: &DMatrix<f64>| kernel.gram(x).component_mul(g).sum();
        DMatrix::from_fn(x.nrows(), x.ncols(), |a, b| {
            let mut xp = x.clone();
            xp[(a, b)] += h;
            let mut xm = x.clone();
            xm[(a, b)] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
    }

    #[test]
    fn linear_kernel_is_inner_product() {
        let x = random(3, 5, 1);
        let k = gram(&x, &KernelSpec::polynomial(1, 0.0)).unwrap();
        assert!((k - x.tr_mul(&x)).amax() < 1e-14);
    }

    #[test]
    fn rbf_unit_diagonal() {
        let x = random(4, 7, 2);
        let k = gram(&x, &KernelSpec::rbf(0.7)).unwrap();
        for i in 0..7 {
            assert_eq!(k[(i, i)], 1.0);
        }
        assert!((&k - k.transpose()).amax() == 0.0);
    }

    #[test]
    fn orthogonal_inputs_quadratic() {
        let k = Kernel::Polynomial { order: 2, offset: 1.0 };
        assert_eq!(k.eval(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn auto_bandwidth_must_be_resolved() {
        let x = random(2, 3, 0);
        assert!(gram(&x, &KernelSpec::rbf_auto(1.0)).is_err());
        let k = KernelSpec::rbf_auto(1.0).resolve(&x).unwrap();
        assert!(matches!(k, Kernel::Rbf { sigma } if sigma > 0.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::polynomial(0, 1.0).validate().is_err());
        assert!(KernelSpec::polynomial(2, -1.0).validate().is_err());
        assert!(KernelSpec::rbf(0.0).validate().is_err());
        assert!(KernelSpec::rbf_auto(-1.0).validate().is_err());
    }

    #[test]
    fn constant_feature_map() {
        let phi = explicit_feature_map(&[0.3, -2.0], 0, 1.0).unwrap();
        assert_eq!(phi, vec![1.0]);
    }

    #[test]
    fn scalar_linear_feature_map() {
        let phi = explicit_feature_map(&[3.0], 1, 0.0).unwrap();
        assert_eq!(phi.len(), 2);
        assert!(phi.contains(&3.0));
        assert!(phi.contains(&0.0));
        let psi = explicit_feature_map(&[-1.5], 1, 0.0).unwrap();
        let dot: f64 = phi.iter().zip(&psi).map(|(a, b)| a * b).sum();
        assert!((dot - 3.0 * -1.5).abs() < 1e-14);
    }

    #[test]
    fn quadratic_feature_map_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fx = explicit_feature_map(&x, 2, 1.0).unwrap();
            let fy = explicit_feature_map(&y, 2, 1.0).unwrap();
            assert_eq!(fx.len(), 10);
            let dot: f64 = fx.iter().zip(&fy).map(|(a, b)| a * b).sum();
            let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((dot - (xy + 1.0).powi(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn feature_map_size_limit() {
        let x = vec![0.1; 40];
        assert!(matches!(
            explicit_feature_map(&x, 6, 1.0),
            Err(Error::FeatureMapTooLarge { .. })
        ));
    }

    #[test]
    fn bandwidth_single_pair() {
        let x = DMatrix::from_column_slice(2, 2, &[0.0, 0.0, 2.0, 0.0]);
        assert!((resolve_bandwidth(&x, 1.0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bandwidth_degenerate_fallback() {
        assert_eq!(resolve_bandwidth(&DMatrix::zeros(3, 4), 1.0).unwrap(), 1.0);
        assert!(resolve_bandwidth(&DMatrix::zeros(3, 1), 1.0).is_err());
    }

    #[test]
    fn bandwidth_matches_pair_enumeration() {
        let x = random(5, 20, 4);
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..20 {
            for j in (i + 1)..20 {
                total += (x.column(i) - x.column(j)).norm_squared();
                pairs += 1;
            }
        }
        assert_eq!(pairs, 190);
        let expect = (total / pairs as f64).sqrt();
        assert!((resolve_bandwidth(&x, 1.0).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn adjoint_zero_weight() {
        let x = random(3, 4, 5);
        let g = DMatrix::zeros(4, 4);
        for k in [Kernel::Rbf { sigma: 1.0 }, Kernel::Polynomial { order: 3, offset: 1.0 }] {
            assert_eq!(k.grad_adjoint(&x, &g).unwrap().amax(), 0.0);
        }
    }

    #[test]
    fn adjoint_linear_kernel() {
        let x = random(3, 5, 6);
        let g = random_symmetric(5, 7);
        let k = Kernel::Polynomial { order: 1, offset: 0.0 };
        let grad = k.grad_adjoint(&x, &g).unwrap();
        assert!((grad - &x * &g * 2.0).amax() < 1e-12);
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        for seed in 0..5 {
            let x = random(4, 6, 100 + seed);
            let g = random_symmetric(6, 200 + seed);
            for kernel in [
                Kernel::Rbf { sigma: 1.0 },
                Kernel::Polynomial { order: 2, offset: 1.0 },
                Kernel::Polynomial { order: 3, offset: 0.5 },
            ] {
                let analytic = kernel.grad_adjoint(&x, &g).unwrap();
                let numeric = fd_adjoint(&kernel, &x, &g, 1e-6);
                let rel = (&analytic - &numeric).norm() / numeric.norm();
                assert!(rel < 1e-5, "{kernel:?} seed {seed}: rel err {rel}");
            }
        }
    }

    #[test]
    fn adjoint_dimension_check() {
        let x = random(2, 3, 0);
        let k = Kernel::Rbf { sigma: 1.0 };
        assert!(k.grad_adjoint(&x, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn grams_are_psd() {
        for seed in 0..100u64 {
            let x = random(3, 9, seed) * 2.0;
            for kernel in [Kernel::Rbf { sigma: 0.8 }, Kernel::Polynomial { order: 2, offset: 1.0 }] {
                let eig = sym_eig(&kernel.gram(&x)).unwrap();
                let top = eig.eigenvalues[0];
                assert!(eig.eigenvalues[8] >= -1e-8 * top, "{kernel:?} seed {seed}");
            }
        }
    }

    #[test]
    fn rbf_truncation_converges() {
        let mut x = random(3, 10, 9);
        for mut c in x.column_iter_mut() {
            let nrm = c.norm();
            if nrm > 1.0 {
                c /= nrm;
            }
        }
        for sigma in [1.0, 2.0] {
            let exact = Kernel::Rbf { sigma }.gram(&x);
            let errs: Vec<f64> = (0..=20)
                .map(|q| (rbf_truncated_gram(&x, sigma, q) - &exact).amax())
                .collect();
            for w in errs.windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
            assert!(errs[20] < 1e-6);
        }
    }
}
