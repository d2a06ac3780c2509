//! Classification as completion: stack features over one-hot labels and
//! treat the test labels as missing entries.
//!
//! ```text
//! [ X   X' ]   features, m rows
//! [ Y   ?? ]   labels, c rows
//! ```

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::masked::MaskedMatrix;

use super::metrics::sample_mask;
use super::synthetic::{PolynomialMap, QuarticCoefficient};

#[derive(Debug, Clone)]
pub struct TransductiveTask {
    /// `m × (n + n')` feature block, zero on missing feature cells.
    pub features: DMatrix<f64>,
    /// `c × n` one-hot training labels.
    pub labels: DMatrix<f64>,
    /// `c × n'` mask of the test-label block (all false).
    pub label_mask: DMatrix<bool>,
    pub class_count: usize,
}

impl TransductiveTask {
    pub fn n_features(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_train(&self) -> usize {
        self.labels.ncols()
    }

    pub fn n_test(&self) -> usize {
        self.label_mask.ncols()
    }
}

/// `c × n` one-hot encoding of class indices.
pub fn one_hot(labels: &[usize], class_count: usize) -> Result<DMatrix<f64>> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::invalid(format!("label {bad} out of range for {class_count} classes")));
    }
    Ok(DMatrix::from_fn(class_count, labels.len(), |i, j| {
        if labels[j] == i {
            1.0
        } else {
            0.0
        }
    }))
}

fn check_one_hot(labels: &DMatrix<f64>) -> Result<()> {
    for (j, col) in labels.column_iter().enumerate() {
        let ones = col.iter().filter(|&&v| v == 1.0).count();
        let zeros = col.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != col.len() {
            return Err(Error::invalid(format!("label column {j} is not one-hot")));
        }
    }
    Ok(())
}

/// Stack training features/labels and test features into one masked
/// `(m + c) × (n + n')` matrix whose test-label block is missing.
///
/// `feature_mask` (`m × (n + n')`, true = observed) hides feature cells.
pub fn build_transductive(
    train_features: &DMatrix<f64>,
    train_labels: &DMatrix<f64>,
    test_features: &DMatrix<f64>,
    feature_mask: Option<&DMatrix<bool>>,
) -> Result<(MaskedMatrix, TransductiveTask)> {
    let m = train_features.nrows();
    let n = train_features.ncols();
    let n_test = test_features.ncols();
    let c = train_labels.nrows();
    if test_features.nrows() != m {
        return Err(Error::dims(format!(
            "train features have {m} rows, test features {}",
            test_features.nrows()
        )));
    }
    if train_labels.ncols() != n {
        return Err(Error::dims(format!(
            "{} label columns for {n} training columns",
            train_labels.ncols()
        )));
    }
    if c == 0 {
        return Err(Error::invalid("at least one class is required"));
    }
    check_one_hot(train_labels)?;
    if let Some(fm) = feature_mask {
        if fm.shape() != (m, n + n_test) {
            return Err(Error::dims(format!(
                "feature mask is {:?}, expected {:?}",
                fm.shape(),
                (m, n + n_test)
            )));
        }
    }

    let total = n + n_test;
    let values = DMatrix::from_fn(m + c, total, |i, j| match (i < m, j < n) {
        (true, true) => train_features[(i, j)],
        (true, false) => test_features[(i, j - n)],
        (false, true) => train_labels[(i - m, j)],
        (false, false) => 0.0,
    });
    let mask = DMatrix::from_fn(m + c, total, |i, j| {
        if i < m {
            feature_mask.is_none_or(|fm| fm[(i, j)])
        } else {
            j < n
        }
    });
    let stacked = MaskedMatrix::new(values, mask)?;
    let features = stacked.zero_filled().rows(0, m).into_owned();
    let task = TransductiveTask {
        features,
        labels: train_labels.clone(),
        label_mask: DMatrix::from_element(c, n_test, false),
        class_count: c,
    };
    Ok((stacked, task))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub predictions: Vec<usize>,
    /// Fraction misclassified, when ground truth was supplied.
    pub error: Option<f64>,
}

/// Argmax over the recovered label rows of each test column; ties go to the
/// lowest class index.
pub fn decode_labels(
    completed: &DMatrix<f64>,
    task: &TransductiveTask,
    truth: Option<&[usize]>,
) -> Result<Decoded> {
    let m = task.n_features();
    let c = task.class_count;
    let n = task.n_train();
    let n_test = task.n_test();
    if completed.shape() != (m + c, n + n_test) {
        return Err(Error::dims(format!(
            "completed matrix is {:?}, task expects {:?}",
            completed.shape(),
            (m + c, n + n_test)
        )));
    }
    let predictions: Vec<usize> = (0..n_test)
        .map(|j| {
            let col = completed.column(n + j);
            let mut best = 0;
            for cls in 1..c {
                if col[m + cls] > col[m + best] {
                    best = cls;
                }
            }
            best
        })
        .collect();
    let error = match truth {
        None => None,
        Some(t) if t.len() != n_test => {
            return Err(Error::dims(format!("{} truth labels for {n_test} test columns", t.len())))
        }
        Some(_) if n_test == 0 => Some(0.0),
        Some(t) => {
            let wrong = predictions.iter().zip(t).filter(|(p, t)| p != t).count();
            Some(wrong as f64 / n_test as f64)
        }
    };
    Ok(Decoded { predictions, error })
}

/// A generated classification problem with known test labels.
#[derive(Debug, Clone)]
pub struct SyntheticClassification {
    pub stacked: MaskedMatrix,
    pub task: TransductiveTask,
    pub test_truth: Vec<usize>,
}

/// `class_count` quadratic manifolds `f_j(z) = A_j z + ½ B_j z^{⊙2}` in `m`
/// dimensions, split evenly into training and test columns, with a fraction
/// `theta` of feature cells hidden.
pub fn synthetic_classification(
    d: usize,
    m: usize,
    class_count: usize,
    n_train: usize,
    n_test: usize,
    theta: f64,
    seed: u64,
) -> Result<SyntheticClassification> {
    if class_count == 0 || !n_train.is_multiple_of(class_count) || !n_test.is_multiple_of(class_count) {
        return Err(Error::invalid("train and test sizes must be multiples of the class count"));
    }
    if d == 0 || d >= m {
        return Err(Error::invalid("need 0 < d < m"));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::invalid("theta must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unif = Uniform::new(-1.0, 1.0).expect("valid range");
    let per_train = n_train / class_count;
    let per_test = n_test / class_count;
    let mut train = DMatrix::zeros(m, n_train);
    let mut test = DMatrix::zeros(m, n_test);
    let mut train_labels = Vec::with_capacity(n_train);
    let mut test_truth = Vec::with_capacity(n_test);
    for cls in 0..class_count {
        let mut f = PolynomialMap::random(m, d, 1.0, QuarticCoefficient::D, &mut rng);
        f.c.fill(0.0);
        f.d.fill(0.0);
        let z = DMatrix::from_fn(d, per_train + per_test, |_, _| unif.sample(&mut rng));
        let x = f.apply(&z);
        train
            .columns_mut(cls * per_train, per_train)
            .copy_from(&x.columns(0, per_train));
        test.columns_mut(cls * per_test, per_test)
            .copy_from(&x.columns(per_train, per_test));
        train_labels.extend(std::iter::repeat_n(cls, per_train));
        test_truth.extend(std::iter::repeat_n(cls, per_test));
    }
    let labels = one_hot(&train_labels, class_count)?;
    let feature_mask = if theta > 0.0 {
        let missing = sample_mask(m, n_train + n_test, theta, seed ^ 0x5eed_fea7)?;
        Some(missing.map(|b| !b))
    } else {
        None
    };
    let (stacked, task) = build_transductive(&train, &labels, &test, feature_mask.as_ref())?;
    Ok(SyntheticClassification {
        stacked,
        task,
        test_truth,
    })
}
