//! Dataset-embedding classifiers: gradient-boosted trees, the
//! distinguishability analysis, hyperparameter search and top-k selection.

mod cv;
mod gbt;
mod hpo;
mod select;

pub use cv::{cross_val_predict, distinguishability, stratified_folds, ConfusionMatrix};
pub use gbt::{train_gbt, GbtConfig, GbtEnsemble, GbtNode, GbtTree, MAX_BINS};
pub use hpo::{cv_score, hpo_search, sample_config, space, HpoOutcome, HpoTrial};
pub use select::{select_engineering_like, ScoredTask, SelectionParams, SelectionReport, TrainComposition};
