//! High-rank matrix completion by rank minimization in a polynomial feature
//! space.
//!
//! Columns generated by low-degree polynomials of a low-dimensional latent
//! variable form a high-rank matrix, but their lift through a polynomial
//! feature map `φ` is low-rank. Completion therefore minimizes a rank
//! surrogate of `φ(X̂)`, evaluated through a kernel Gram matrix so the
//! feature map is never formed.
//!
//! * [`spectral`]: eigendecompositions and spectral matrix powers.
//! * [`kernels`]: polynomial and RBF Gram matrices and their adjoints.
//! * [`objectives`]: Schatten, truncated and weighted surrogates and their
//!   majorizers.
//! * [`solver`]: the Adam+ completion loop.
//! * [`baseline`]: nuclear-norm completion for comparison.
//! * [`complexity`]: degrees-of-freedom and sampling-rate bounds.
//! * [`bench`]: data generators, metrics and the experiment grid.
//! * [`io`]: CSV matrices with missing cells.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod bench;
pub mod cli;
pub mod complexity;
pub mod error;
pub mod io;
pub mod kernels;
pub mod masked;
pub mod objectives;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelSpec};
pub use masked::MaskedMatrix;
pub use objectives::{RelaxationKind, RelaxationSpec, WeightRule};
pub use solver::{solve_pmc, CompletionResult, FitMode, SolverConfig};
