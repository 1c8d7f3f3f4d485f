//! Minimum average top-k (MAT_k) learning.
//!
//! The average top-k (AT_k) aggregate loss averages the `k` largest individual
//! losses of a model over its training set. It contains the average loss
//! (`k = n`) and the maximum loss (`k = 1`) as special cases and stays convex
//! in the individual losses, so linear models can be trained by a plain
//! stochastic subgradient method over the weights and one extra threshold.
//!
//! * [`losses`]: logistic, hinge, squared and absolute individual losses.
//! * [`aggregate`]: average, maximum, top-k, AT_k and average bottom-k.
//! * [`solver`]: the joint `(w, lambda)` subgradient trainer.
//! * [`svm_dual`]: the AT_k-SVM dual QP with linear and RBF kernels.
//! * [`data`]: synthetic generators, file formats and splits.
//! * [`eval`]: metrics, grid search and k sweeps.
//!
//! ```
//! use matk::aggregate::{aggregate_value, AggregateSpec};
//!
//! let losses = [4.0, 2.0, 0.0, 1.0];
//! assert_eq!(aggregate_value(&losses, AggregateSpec::Atk(2)).unwrap(), 3.0);
//! assert_eq!(aggregate_value(&losses, AggregateSpec::Atk(4)).unwrap(), 1.75);
//! ```
//!
//! A guide with longer walkthroughs lives in the repository's `book/`
//! directory; its code listings compile and run as doctests of this crate.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod solver;
pub mod svm_dual;

pub use aggregate::AggregateSpec;
pub use data::{Dataset, Task};
pub use error::{MatkError, Result};
pub use losses::IndividualLoss;
pub use solver::{ModelState, TrainConfig};
pub use svm_dual::{DualConfig, DualSolution, KernelSpec};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

/// Book chapters compiled as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/aggregate-losses.md")]
    mod aggregate_losses {}

    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}

    #[doc = include_str!("../../../book/src/atk-svm.md")]
    mod atk_svm {}

    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}

    #[doc = include_str!("../../../book/src/data-formats.md")]
    mod data_formats {}
}
