//! Repeated stratified cross-validation, F1 and the overfitting metrics.

pub mod cv;
pub mod experiment;
pub mod folds;
pub mod metrics;
pub mod trainer;

pub use cv::{cross_validate, CvReport, CvSettings, Dispersion, FitScore};
pub use experiment::{
    parse_strategies, run_cells, CellData, CellReport, CellStatus, DerivedRow, ExperimentReport, FigureRow, Strategy,
};
pub use folds::{stratified_folds, FoldAssignment, Split};
pub use metrics::{
    f1_scores, overfit_ratio, overfit_reduction, penalized_score, relative_decrease, relative_gain, Averaging, ClassF1,
    F1Scores,
};
pub use trainer::{BuiltinTrainer, Hyperparams, PredictionRow, SubprocessTrainer, Trainer};
