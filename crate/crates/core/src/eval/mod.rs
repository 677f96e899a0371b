//! Fold construction, nested cross-validation, metrics and corpus tests.

mod folds;
mod metrics;
mod nested;
mod stats;

pub use folds::{make_folds, FoldMode, FoldPlan, Gender, Sample};
pub use metrics::{metrics, roc_curve, Confusion, Metrics, Roc, RocPoint};
pub use nested::{nested_cv, Aggregate, EvalReport, FoldAudit, FoldReport, Grid, NestedOptions, Prediction};
pub use stats::{chi_square_independence, student_t_two_sided, welch_t_test, TestResult};
