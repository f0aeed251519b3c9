use serde::{Deserialize, Serialize};

use super::CcdfCurve;
use crate::dist::SplicedMixtureParams;
use crate::error::{Error, Result};

/// Tail levels at which errors are reported by default.
pub const DEFAULT_LEVELS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// Number of log-spaced CCDF levels in an evaluation grid.
pub const GRID_LEVELS: usize = 60;
pub const GRID_TOP: f64 = 0.5;
pub const GRID_BOTTOM: f64 = 1e-6;

/// Error of a predicted CCDF at one tail level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailMetric {
    pub level: f64,
    /// Truth's latency at this level; `None` marks the level unavailable.
    pub truth_latency_ms: Option<f64>,
    /// log10(predicted ccdf at the truth quantile / level).
    pub log10_error: Option<f64>,
    /// Predicted quantile minus the truth quantile at this level.
    pub quantile_error_ms: Option<f64>,
}

impl TailMetric {
    pub fn is_available(&self) -> bool {
        self.truth_latency_ms.is_some()
    }
}

/// Tail errors of `predicted` against `truth` at each level. Both curves must
/// share a grid. Levels the truth cannot resolve are reported unavailable.
pub fn tail_error(predicted: &CcdfCurve, truth: &CcdfCurve, levels: &[f64]) -> Result<Vec<TailMetric>> {
    if predicted.grid != truth.grid {
        return Err(Error::Domain("predicted and truth curves do not share a grid".into()));
    }
    Ok(levels
        .iter()
        .map(|&level| {
            let Some(y) = truth.crossing(level) else {
                return TailMetric {
                    level,
                    truth_latency_ms: None,
                    log10_error: None,
                    quantile_error_ms: None,
                };
            };
            let log10_error = predicted
                .value_at(y)
                .map(|p| (p.max(f64::MIN_POSITIVE) / level).log10());
            TailMetric {
                level,
                truth_latency_ms: Some(y),
                log10_error,
                quantile_error_ms: predicted.crossing(level).map(|q| q - y),
            }
        })
        .collect())
}

/// CCDF levels of an evaluation grid: `GRID_LEVELS` log-spaced levels from
/// `GRID_TOP` down to `GRID_BOTTOM`, merged with `extra`, descending.
pub fn grid_levels(extra: &[f64]) -> Vec<f64> {
    let (top, bottom) = (GRID_TOP.log10(), GRID_BOTTOM.log10());
    let mut levels: Vec<f64> = (0..GRID_LEVELS)
        .map(|i| 10f64.powf(top + (bottom - top) * i as f64 / (GRID_LEVELS - 1) as f64))
        .chain(extra.iter().copied().filter(|p| *p > 0.0 && *p < 1.0))
        .collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    levels
}

/// Latency grid at the exact quantiles of a known law.
pub fn analytic_grid(theta: &SplicedMixtureParams, levels: &[f64]) -> Result<Vec<f64>> {
    let mut grid = levels
        .iter()
        .map(|&q| theta.upper_quantile(q))
        .collect::<Result<Vec<_>>>()?;
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Latency grid at empirical quantiles; levels below 1/n are dropped.
pub fn empirical_grid(samples: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Domain("empirical grid of an empty sample set".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut grid: Vec<f64> = levels
        .iter()
        .filter(|&&q| q >= 1.0 / n as f64)
        .map(|&q| {
            // without ties, exactly floor(q·n) samples lie strictly above this order statistic
            let above = ((q * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
            sorted[n - above - 1]
        })
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}
