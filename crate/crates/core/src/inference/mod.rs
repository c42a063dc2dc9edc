//! Posterior summaries, fitted and predictive completeness, convergence
//! diagnostics and the shrinkage-probability quadrature.

mod predict;
pub mod quadrature;
mod summary;
mod theory;

pub use predict::{
    deviances, deviances_from_design, draw_local_precision, fitted_completeness, fitted_draws, open_unit,
    predict_new_unit, prediction_draws, shrinkage_factors, DeviancePair, FittedValue, PredictionInput, PredictionMode,
    PredictionResult, ShrinkageSummary, PREDICTION_STREAM,
};
pub use summary::{
    effective_sample_size, mean, quantile, quantile_sorted, sd, split_rhat, summarize, summarize_draws, DrawSummary,
    ParameterSummary, PosteriorSummary,
};
pub use theory::{
    c1, c2, log10_grid, log_linear_tail_slope, loglog_tail_slope, ols_slope, strictly_decreasing, theorem2_curve,
    CurveConfig, CurvePoint, ScaleFamily, Sweep,
};
