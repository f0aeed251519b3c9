//! Synthetic latency traces with an analytically known conditional law.
//!
//! Every grid point carries its own spliced mixture in milliseconds, so exact
//! tail probabilities are available at any latency for evaluation.

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, LatencySample, Provenance, TraceProfile};
use crate::dist::{GmmParams, SplicedMixtureParams, TailParams};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Largest tolerated ground-truth probability of a nonpositive latency.
const MAX_NONPOSITIVE_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub conditions: Vec<f64>,
    /// Ground-truth latency law in milliseconds.
    pub theta: SplicedMixtureParams,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub condition_names: Vec<String>,
    pub grid: Vec<GridPoint>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<TraceProfile>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.grid.iter().enumerate() {
            if p.conditions.len() != self.condition_names.len() {
                return Err(Error::Config(format!(
                    "grid point {i} has {} condition values for {} names",
                    p.conditions.len(),
                    self.condition_names.len()
                )));
            }
            if p.conditions.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!("grid point {i} has non-finite conditions")));
            }
            if p.theta.cdf(0.0) > MAX_NONPOSITIVE_MASS {
                return Err(Error::ParamDomain(format!(
                    "grid point {i} puts probability {} on nonpositive latencies",
                    p.theta.cdf(0.0)
                )));
            }
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.grid.iter().map(|p| p.samples).sum()
    }

    /// Ground truth at exactly these raw condition values.
    pub fn truth_at(&self, conditions: &[f64]) -> Option<&SplicedMixtureParams> {
        self.grid
            .iter()
            .find(|p| super::same_bits(&p.conditions, conditions))
            .map(|p| &p.theta)
    }

    /// Single unconditional law.
    pub fn unconditional(theta: SplicedMixtureParams, samples: usize, seed: u64) -> Self {
        Self {
            condition_names: Vec::new(),
            grid: vec![GridPoint {
                conditions: Vec::new(),
                theta,
                samples,
            }],
            seed,
            profile: Some(TraceProfile::default()),
        }
    }

    /// Load sweep over packet lengths: larger packets get heavier, wider tails.
    pub fn packet_length_sweep(lengths_bytes: &[f64], samples: usize, seed: u64) -> Result<Self> {
        let severities = normalized_positions(lengths_bytes, false);
        Self::sweep("packet_length_bytes", lengths_bytes, &severities, samples, seed)
    }

    /// MCS sweep: higher indices mean more link capacity and lighter tails.
    pub fn mcs_sweep(mcs: &[f64], samples: usize, seed: u64) -> Result<Self> {
        let severities = normalized_positions(mcs, true);
        Self::sweep("mcs", mcs, &severities, samples, seed)
    }

    fn sweep(name: &str, values: &[f64], severities: &[f64], samples: usize, seed: u64) -> Result<Self> {
        let grid = values
            .iter()
            .zip(severities)
            .map(|(&v, &s)| {
                Ok(GridPoint {
                    conditions: vec![v],
                    theta: default_family(s)?,
                    samples,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            condition_names: vec![name.to_string()],
            grid,
            seed,
            profile: Some(TraceProfile::default()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Positions of `values` within their range, in [0, 1]; reversed when `descending`.
fn normalized_positions(values: &[f64], descending: bool) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            let s = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            if descending {
                1.0 - s
            } else {
                s
            }
        })
        .collect()
}

/// Two-component Gaussian bulk spliced at its 0.9 quantile with a GPD tail.
/// `severity` in [0, 1] raises the bulk location and spread, the tail scale
/// β (0.5 → 1.5 ms) and the tail shape ξ (0.1 → 0.4).
pub fn default_family(severity: f64) -> Result<SplicedMixtureParams> {
    if !(0.0..=1.0).contains(&severity) {
        return Err(Error::ParamDomain(format!("severity {severity} outside [0, 1]")));
    }
    let base = 5.0 + 3.0 * severity;
    let bulk = GmmParams::new(
        vec![0.7, 0.3],
        vec![base, base + 1.5 + severity],
        vec![0.6 + 0.3 * severity, 0.8 + 0.4 * severity],
    )?;
    let threshold = SplicedMixtureParams::gmm(bulk.clone()).quantile(0.9)?;
    let tail = TailParams::new(threshold, 0.5 + severity, 0.1 + 0.3 * severity)?;
    Ok(SplicedMixtureParams::new(bulk, Some(tail)))
}

/// Draws every grid point's samples from its ground truth, grid points in
/// order, each from its own derived seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(spec.total_samples());
    for (i, point) in spec.grid.iter().enumerate() {
        let draws = point.theta.sample(point.samples, derive_seed(spec.seed, i as u64));
        if let Some(bad) = draws.iter().find(|y| **y <= 0.0) {
            return Err(Error::ParamDomain(format!(
                "grid point {i} produced nonpositive latency {bad}"
            )));
        }
        samples.extend(draws.into_iter().map(|latency_ms| LatencySample {
            latency_ms,
            conditions: point.conditions.clone(),
        }));
    }
    Dataset::new(
        spec.condition_names.clone(),
        samples,
        DatasetMeta {
            source: Provenance::Synthetic(Box::new(spec.clone())),
            profile: spec.profile,
        },
    )
}
