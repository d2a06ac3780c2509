use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Partially observed real matrix: values plus an observation mask Ω.
///
/// Cells outside Ω hold an arbitrary placeholder (zero) and are never read
/// as data.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl MaskedMatrix {
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::dims(format!(
                "values are {:?} but mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        let mut observed = 0usize;
        for (v, &m) in values.iter().zip(mask.iter()) {
            if m {
                if !v.is_finite() {
                    return Err(Error::invalid("observed entries must be finite"));
                }
                observed += 1;
            }
        }
        if observed == 0 {
            return Err(Error::invalid("matrix has no observed entries"));
        }
        let values = values.zip_map(&mask, |v, m| if m { v } else { 0.0 });
        Ok(Self { values, mask })
    }

    pub fn fully_observed(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask)
    }

    /// Hide every cell where `mask` is false.
    pub fn from_ground_truth(truth: &DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        Self::new(truth.clone(), mask)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    /// Observed values with zeros on the missing cells (`P_Ω(X)`).
    pub fn zero_filled(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[(i, j)].then(|| self.values[(i, j)])
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn missing_count(&self) -> usize {
        self.mask.len() - self.observed_count()
    }

    /// Zero-filled values with each missing cell replaced by its column's
    /// observed mean (or zero for a column with no observations).
    pub fn column_mean_filled(&self) -> DMatrix<f64> {
        let mut out = self.values.clone();
        for j in 0..self.ncols() {
            let (sum, cnt) = (0..self.nrows())
                .filter(|&i| self.mask[(i, j)])
                .fold((0.0, 0usize), |(s, c), i| (s + self.values[(i, j)], c + 1));
            let mean = if cnt > 0 { sum / cnt as f64 } else { 0.0 };
            for i in 0..self.nrows() {
                if !self.mask[(i, j)] {
                    out[(i, j)] = mean;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_inputs() {
        let v = DMatrix::from_element(2, 2, 1.0);
        assert!(MaskedMatrix::new(v.clone(), DMatrix::from_element(2, 3, true)).is_err());
        assert!(MaskedMatrix::new(v.clone(), DMatrix::from_element(2, 2, false)).is_err());
        let mut nan = v.clone();
        nan[(0, 0)] = f64::NAN;
        assert!(MaskedMatrix::fully_observed(nan.clone()).is_err());
        let mut mask = DMatrix::from_element(2, 2, true);
        mask[(0, 0)] = false;
        let m = MaskedMatrix::new(nan, mask).unwrap();
        assert_eq!(m.get(0, 0), None);
        assert_eq!(m.zero_filled()[(0, 0)], 0.0);
        assert_eq!(m.missing_count(), 1);
    }

    #[test]
    fn column_mean_fill() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 3.0, 0.0]);
        let mask = DMatrix::from_row_slice(2, 2, &[true, true, true, false]);
        let m = MaskedMatrix::new(v, mask).unwrap();
        assert_eq!(m.column_mean_filled()[(1, 1)], 5.0);
    }
}
