//! Classifier and regressor evaluation toolkit.
//!
//! The crate covers the whole evaluation path for small-sample supervised
//! learning studies:
//!
//! - [`data`]: datasets with optional group (independence unit) identifiers
//!   and the class-prior estimator.
//! - [`metrics`]: confusion matrices and every derived scalar measure,
//!   regression measures, and the Bayes-formula posterior.
//! - [`roc`]: ROC curves, Mann-Whitney AUC, threshold selection rules and
//!   the two ways of combining folds (pooling vs averaging).
//! - [`intervals`]: binomial-proportion intervals, Hanley-McNeil and DeLong
//!   AUC intervals.
//! - [`resampling`]: split plans (holdout, k-fold, grouped, stratified,
//!   repeated, LOOCV), leakage-safe pipelines, cross-validation, nested CV and
//!   bootstrap out-of-bag estimation.
//! - [`compare`]: McNemar, 5x2 CV, corrected resampled t and DeLong tests.
//! - [`models`]: Gaussian naive Bayes, majority baseline and the Bayes-optimal
//!   classifier for known Gaussian problems.
//! - [`sim`]: the CV-versus-holdout Monte Carlo study.

pub mod compare;
pub mod data;
mod error;
pub mod intervals;
pub mod metrics;
pub mod models;
pub mod numeric;
pub mod resampling;
pub mod rng;
pub mod roc;
pub mod sim;

pub use error::{Error, Result};
