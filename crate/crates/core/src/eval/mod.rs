//! Mask quality scoring against ground truth.

mod compare;
mod plot;
mod roc;

pub use compare::{compare_methods, ComparisonReport, EvalSample, MaskFn, Method, MethodResult};
pub use plot::plot_curves;
pub use roc::{macro_auc, roc, roc_from_scores, RocResult};
