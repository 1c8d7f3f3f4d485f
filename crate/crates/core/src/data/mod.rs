//! Datasets, splits, synthetic generators and file formats.

mod dataset;
pub mod io;
mod split;
pub mod synthetic;

pub use dataset::{normalize_targets, Dataset, TargetScale, Task};
pub use io::{load_auto, load_dense_csv, load_sparse, write_dense_csv, write_sparse};
pub use split::{make_split, SplitPlan};
pub use synthetic::{generate_gaussian_case, generate_sinc};
