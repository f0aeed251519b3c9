//! Empirical and predicted CCDF curves, ensemble bands, tail errors and
//! report emission.

mod curve;
mod metrics;
mod report;

pub use curve::{analytic_ccdf, empirical_ccdf, ensemble_bands, predict_ccdf, Band, CcdfCurve};
pub use metrics::{
    analytic_grid, empirical_grid, grid_levels, tail_error, TailMetric, DEFAULT_LEVELS, GRID_BOTTOM,
    GRID_LEVELS, GRID_TOP,
};
pub use report::{
    evaluate, ConditionReport, EvaluationReport, ModelEntry, Truth, REPORT_FORMAT_VERSION,
};
