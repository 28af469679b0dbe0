//! Learning curves, holdout comparisons and data-efficiency metrics over a
//! common regressor contract.

mod adapters;
mod curve;
mod efficiency;
mod report;

pub use adapters::{
    reference_regressors, FittedRegressor, KnnRegressor, MeanRegressor, PfnRegressor, RegressorAdapter,
    RidgeRegressor, TreeRegressor,
};
pub use curve::{holdout_mse, sweep_curve, CurvePoint, PerformanceCurve, DEFAULT_FOLDS, DEFAULT_FRACTIONS};
pub use efficiency::{
    data_efficiency, required_data, summarize, EfficiencyResult, EfficiencySummary, RequiredData, EXTRAPOLATION_CAP,
    REF_FRACTION,
};
pub use report::{curves_csv, efficiency_csv, win_matrix, DatasetResult, EfficiencyRecord, WinMatrix, WinRow};
