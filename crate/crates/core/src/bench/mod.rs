//! Synthetic data, sampling masks, error metrics, transductive tasks and the
//! experiment grid.

mod grid;
mod metrics;
mod synthetic;
mod transductive;

pub use grid::{
    grid_instance, median, run_grid, trial_seed, write_plot_data, write_rows_csv, GridSpec,
    Method, MethodSettings, Metric, ResultRow,
};
pub use metrics::{rae, rse, sample_mask};
pub use synthetic::{
    generate_polynomial_data, generate_synthetic, PolynomialMap, QuarticCoefficient,
    SyntheticData, SyntheticSpec,
};
pub use transductive::{
    build_transductive, decode_labels, one_hot, synthetic_classification, Decoded,
    SyntheticClassification, TransductiveTask,
};
