//! Gaussian-kernel SVMs trained by SMO, combined one-vs-one.

mod multiclass;
mod smo;
mod standardize;

pub use multiclass::{train_multiclass, DecisionScores, MulticlassSvm, SvmParams, TrainingSet};
pub use smo::{rbf_kernel, train_binary_smo, BinarySvm, SmoConfig, DEFAULT_TOL, PASSES_PER_SAMPLE};
pub use standardize::{Standardizer, STD_FLOOR};
