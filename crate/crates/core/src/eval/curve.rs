use serde::{Deserialize, Serialize};

use crate::dist::SplicedMixtureParams;
use crate::error::{Error, Result};
use crate::model::ModelWeights;

/// CCDF P[Y > y] sampled on an ascending latency grid (milliseconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcdfCurve {
    pub label: String,
    /// Raw condition values this curve belongs to.
    pub condition: Vec<f64>,
    pub grid: Vec<f64>,
    pub probs: Vec<f64>,
    /// Smallest probability the curve can resolve: 1/n for empirical curves, 0 otherwise.
    pub resolution: f64,
}

impl CcdfCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn is_monotone(&self) -> bool {
        self.grid.windows(2).all(|w| w[0] < w[1]) && self.probs.windows(2).all(|w| w[0] >= w[1])
    }

    /// Latency at which the curve crosses `level`, interpolating log-linearly
    /// in probability between grid points. `None` when the grid does not
    /// bracket the level or the level is below the curve's resolution.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        if level < self.resolution || self.probs.is_empty() {
            return None;
        }
        if let Some(j) = self.probs.iter().position(|&p| p == level) {
            return Some(self.grid[j]);
        }
        let j = self.probs.iter().position(|&p| p < level)?;
        if j == 0 {
            return None;
        }
        let (y0, y1) = (self.grid[j - 1], self.grid[j]);
        let (p0, p1) = (self.probs[j - 1], self.probs[j]);
        let frac = if p1 > 0.0 {
            (level.ln() - p0.ln()) / (p1.ln() - p0.ln())
        } else {
            (level - p0) / (p1 - p0)
        };
        Some(y0 + frac * (y1 - y0))
    }

    /// Curve value at `y`, log-linear between grid points; `None` off the grid.
    pub fn value_at(&self, y: f64) -> Option<f64> {
        let (first, last) = (*self.grid.first()?, *self.grid.last()?);
        if y < first || y > last {
            return None;
        }
        let j = self.grid.partition_point(|&g| g < y);
        if self.grid[j] == y {
            return Some(self.probs[j]);
        }
        let (y0, y1) = (self.grid[j - 1], self.grid[j]);
        let (p0, p1) = (self.probs[j - 1], self.probs[j]);
        let frac = (y - y0) / (y1 - y0);
        if p0 > 0.0 && p1 > 0.0 {
            Some((p0.ln() + frac * (p1.ln() - p0.ln())).exp())
        } else {
            Some(p0 + frac * (p1 - p0))
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("latency grid must be finite and strictly ascending".into()));
    }
    Ok(())
}

/// Exact empirical CCDF: the fraction of samples strictly above each grid point.
pub fn empirical_ccdf(samples: &[f64], grid: &[f64]) -> Result<CcdfCurve> {
    if samples.is_empty() {
        return Err(Error::Domain("empirical CCDF of an empty sample set".into()));
    }
    check_grid(grid)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let probs = grid
        .iter()
        .map(|&y| (n - sorted.partition_point(|&s| s <= y)) as f64 / n as f64)
        .collect();
    Ok(CcdfCurve {
        label: "empirical".into(),
        condition: Vec::new(),
        grid: grid.to_vec(),
        probs,
        resolution: 1.0 / n as f64,
    })
}

/// Exact CCDF of a known law.
pub fn analytic_ccdf(theta: &SplicedMixtureParams, grid: &[f64]) -> Result<CcdfCurve> {
    check_grid(grid)?;
    Ok(CcdfCurve {
        label: "analytic".into(),
        condition: Vec::new(),
        grid: grid.to_vec(),
        probs: grid.iter().map(|&y| theta.ccdf(y)).collect(),
        resolution: 0.0,
    })
}

/// Model-predicted P[Y > y | x] on a millisecond grid, for raw condition values.
pub fn predict_ccdf(model: &ModelWeights, condition: &[f64], grid: &[f64]) -> Result<CcdfCurve> {
    check_grid(grid)?;
    let theta = model.predict(condition)?;
    let stats = model.stats();
    Ok(CcdfCurve {
        label: format!("{}-{}", model.config().head, model.seed()),
        condition: condition.to_vec(),
        grid: grid.to_vec(),
        probs: grid
            .iter()
            .map(|&y| theta.ccdf(stats.normalize_latency(y)))
            .collect(),
        resolution: 0.0,
    })
}

/// Pointwise minimum, mean and maximum of several curves on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub min: Vec<f64>,
    pub avg: Vec<f64>,
    pub max: Vec<f64>,
}

impl Band {
    pub fn is_ordered(&self) -> bool {
        self.min
            .iter()
            .zip(&self.avg)
            .zip(&self.max)
            .all(|((lo, mid), hi)| lo <= mid && mid <= hi)
    }
}

pub fn ensemble_bands(curves: &[CcdfCurve]) -> Result<Band> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Domain("ensemble band needs at least one curve".into()))?;
    if curves.iter().any(|c| c.grid != first.grid || c.probs.len() != first.grid.len()) {
        return Err(Error::Domain("ensemble curves do not share a grid".into()));
    }
    let m = first.len();
    let k = curves.len() as f64;
    let mut band = Band {
        min: vec![f64::INFINITY; m],
        avg: vec![0.0; m],
        max: vec![f64::NEG_INFINITY; m],
    };
    for c in curves {
        for (j, &p) in c.probs.iter().enumerate() {
            band.min[j] = band.min[j].min(p);
            band.max[j] = band.max[j].max(p);
            band.avg[j] += p;
        }
    }
    for j in 0..m {
        // the rounded mean can step just outside [min, max] when all members agree
        band.avg[j] = (band.avg[j] / k).clamp(band.min[j], band.max[j]);
    }
    Ok(band)
}

impl Band {
    /// The average curve as a `CcdfCurve` on `grid`.
    pub fn avg_curve(&self, grid: &[f64], condition: &[f64]) -> CcdfCurve {
        CcdfCurve {
            label: "ensemble-avg".into(),
            condition: condition.to_vec(),
            grid: grid.to_vec(),
            probs: self.avg.clone(),
            resolution: 0.0,
        }
    }
}
