use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};

/// Which coefficient matrix multiplies the quartic term.
///
/// The generator draws four coefficient matrices `A, B, C, D`; `D` on the
/// quartic term gives data of rank `4d`. `RepeatC` reuses `C` there
/// instead, which leaves `D` unused and caps the rank at `3d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuarticCoefficient {
    #[default]
    D,
    RepeatC,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    /// Latent dimension.
    pub d: usize,
    /// Ambient dimension.
    pub m: usize,
    /// Columns per manifold.
    pub n: usize,
    /// Number of manifolds.
    pub k: usize,
    /// Standard deviation of the coefficient entries.
    pub coefficient_scale: f64,
    pub seed: u64,
    pub quartic: QuarticCoefficient,
}

impl SyntheticSpec {
    pub fn new(d: usize, m: usize, n: usize, k: usize, seed: u64) -> Self {
        Self {
            d,
            m,
            n,
            k,
            coefficient_scale: 1.0,
            seed,
            quartic: QuarticCoefficient::D,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d >= self.m {
            return Err(Error::invalid(format!("need 0 < d < m, got d={} m={}", self.d, self.m)));
        }
        if self.k == 0 || self.n == 0 {
            return Err(Error::invalid("need k >= 1 and n >= 1"));
        }
        if !(self.coefficient_scale > 0.0 && self.coefficient_scale.is_finite()) {
            return Err(Error::invalid("coefficient scale must be positive"));
        }
        Ok(())
    }
}

/// `f(Z) = AZ + ½(BZ^{⊙2} + CZ^{⊙3} + DZ^{⊙4})` with `m × d` coefficients.
#[derive(Debug, Clone)]
pub struct PolynomialMap {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub quartic: QuarticCoefficient,
}

impl PolynomialMap {
    pub fn random<R: Rng>(m: usize, d: usize, scale: f64, quartic: QuarticCoefficient, rng: &mut R) -> Self {
        let mut draw = || {
            DMatrix::from_fn(m, d, |_, _| {
                let g: f64 = StandardNormal.sample(rng);
                scale * g
            })
        };
        let a = draw();
        let b = draw();
        let c = draw();
        let d = draw();
        Self { a, b, c, d, quartic }
    }

    pub fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let z2 = z.map(|v| v * v);
        let z3 = z.map(|v| v * v * v);
        let z4 = z2.map(|v| v * v);
        let quartic = match self.quartic {
            QuarticCoefficient::D => &self.d,
            QuarticCoefficient::RepeatC => &self.c,
        };
        &self.a * z + (&self.b * z2 + &self.c * z3 + quartic * z4) * 0.5
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// `m × (k·n)`, manifold `j` in columns `j·n .. (j+1)·n`.
    pub x: DMatrix<f64>,
    /// Manifold index of every column.
    pub labels: Vec<usize>,
    /// `d × (k·n)` latent coordinates.
    pub latent: DMatrix<f64>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.k * spec.n;
    let mut x = DMatrix::zeros(spec.m, total);
    let mut latent = DMatrix::zeros(spec.d, total);
    let mut labels = Vec::with_capacity(total);
    let unif = Uniform::new(-1.0, 1.0).expect("valid range");
    for j in 0..spec.k {
        let f = PolynomialMap::random(spec.m, spec.d, spec.coefficient_scale, spec.quartic, &mut rng);
        let z = DMatrix::from_fn(spec.d, spec.n, |_, _| unif.sample(&mut rng));
        x.columns_mut(j * spec.n, spec.n).copy_from(&f.apply(&z));
        latent.columns_mut(j * spec.n, spec.n).copy_from(&z);
        labels.extend(std::iter::repeat_n(j, spec.n));
    }
    Ok(SyntheticData { x, labels, latent })
}

/// Columns `f(z)` of a random polynomial map of degree `alpha ≤ 4`, using
/// only the first `alpha` terms of the generator.
pub fn generate_polynomial_data(
    m: usize,
    d: usize,
    n: usize,
    alpha: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if !(1..=4).contains(&alpha) || d == 0 || d >= m || n == 0 {
        return Err(Error::invalid("need 1 <= alpha <= 4 and 0 < d < m"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = PolynomialMap::random(m, d, 1.0, QuarticCoefficient::D, &mut rng);
    let unif = Uniform::new(-1.0, 1.0).expect("valid range");
    let z = DMatrix::from_fn(d, n, |_, _| unif.sample(&mut rng));
    for (deg, coef) in [(2, &mut f.b), (3, &mut f.c), (4, &mut f.d)] {
        if alpha < deg {
            coef.fill(0.0);
        }
    }
    Ok(f.apply(&z))
}
