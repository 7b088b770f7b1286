//! Synthetic imputation for imbalanced text-classification training sets.
//!
//! The crate covers the whole offline pipeline: corpus loading and
//! diagnosis ([`corpus`], [`planner`]), few-shot generation with provenance
//! ([`generator`]), lexical-overlap screening ([`validator`]), comparison
//! augmenters ([`baselines`]), a hashed naive-Bayes classifier
//! ([`classifier`]) and repeated stratified cross-validation with the
//! overfitting metrics ([`eval`]). [`store`] and [`pipeline`] tie the stages
//! together behind an append-only run directory.
//!
//! Metric and similarity arithmetic is generic over [`Scalar`]; the aliases
//! below pin the precision used by reports.

pub mod baselines;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod generator;
pub mod lexicon;
pub mod pipeline;
pub mod planner;
pub mod scalar;
pub mod seed;
pub mod store;
pub mod text;
pub mod validator;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Precision used for every persisted score.
pub type Score = f64;
/// Per-class and overall F1 at report precision.
pub type F1Report = eval::metrics::F1Scores<Score>;
/// Batch coverage at report precision.
pub type Coverage = planner::BatchCoverage<Score>;
/// Label shares at report precision.
pub type Distribution = corpus::LabelDistribution<Score>;
