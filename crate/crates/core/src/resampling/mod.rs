//! Resampling: split plans, leakage-safe pipelines, cross-validation,
//! nested cross-validation and bootstrap out-of-bag estimation.
//!
//! Every randomized step draws from a stream seeded by the master seed and
//! the step's coordinates (repeat, fold, replicate), so a report is
//! reproducible bit for bit no matter how the work is scheduled.

mod bootstrap;
mod evaluate;
mod pipeline;
mod split;

pub use bootstrap::{bootstrap_indices, bootstrap_oob, distinct_fraction, estimate_632, BootstrapReport};
pub use evaluate::{
    cross_validate, cross_validate_with_peeking, nested_cv, resubstitute, Aggregate, EvalReport, FoldResult, FoldStatus,
    GridPoint, MetricSpec, SelectionMetric, UnsafePeeking,
};
pub use pipeline::{
    FittedPipeline, FittedStage, JitterAugment, Pipeline, PipelineSpec, Predictions, SelectKBest, Stage, Standardize,
};
pub use split::{holdout_split, kfold_split, leave_one_out, Fold, KFoldOptions, SchemeKind, SchemeMeta, SplitPlan};
