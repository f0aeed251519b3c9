use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::{stream_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionStats {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ConditionStats {
    pub fn is_degenerate(&self) -> bool {
        !(self.max > self.min)
    }

    /// Min-max map to [0, 1]; a constant column maps to 0.5.
    pub fn normalize(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }
}

/// Statistics that map raw traces into the model's normalized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessStats {
    pub latency_mean: f64,
    pub latency_scale: f64,
    pub conditions: Vec<ConditionStats>,
}

/// Training data in normalized space, with samples indexed by distinct condition vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDataset {
    /// Distinct normalized condition vectors.
    pub inputs: Vec<Vec<f64>>,
    /// For each sample, its index into `inputs`.
    pub input_ids: Vec<usize>,
    pub latencies: Vec<f64>,
}

impl NormalizedDataset {
    pub fn len(&self) -> usize {
        self.latencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latencies.is_empty()
    }
}

impl PreprocessStats {
    /// Mean-centres latencies and records per-condition ranges. Latencies stay
    /// in milliseconds unless `latency_scale_ms` says otherwise.
    pub fn fit(dataset: &Dataset, latency_scale_ms: f64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::ingestion(None, "cannot preprocess an empty dataset"));
        }
        if !(latency_scale_ms.is_finite() && latency_scale_ms > 0.0) {
            return Err(Error::Config(format!("latency scale {latency_scale_ms} must be positive")));
        }
        let n = dataset.len() as f64;
        let latency_mean = dataset.latencies().sum::<f64>() / n;
        let conditions = dataset
            .schema()
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let (min, max) = dataset
                    .samples()
                    .iter()
                    .map(|s| s.conditions[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                let stats = ConditionStats {
                    name: name.clone(),
                    min,
                    max,
                };
                if stats.is_degenerate() {
                    log::warn!("condition `{name}` is constant ({min}); mapping it to 0.5");
                }
                stats
            })
            .collect();
        Ok(Self {
            latency_mean,
            latency_scale: latency_scale_ms,
            conditions,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.conditions.len()
    }

    pub fn condition_names(&self) -> Vec<String> {
        self.conditions.iter().map(|c| c.name.clone()).collect()
    }

    #[inline]
    pub fn normalize_latency(&self, ms: f64) -> f64 {
        (ms - self.latency_mean) / self.latency_scale
    }

    #[inline]
    pub fn denormalize_latency(&self, y: f64) -> f64 {
        self.latency_mean + self.latency_scale * y
    }

    pub fn normalize_conditions(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.conditions.len() {
            return Err(Error::Config(format!(
                "expected {} condition values ({:?}), got {}",
                self.conditions.len(),
                self.condition_names(),
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("condition values must be finite".into()));
        }
        Ok(self
            .conditions
            .iter()
            .zip(raw)
            .map(|(c, &v)| c.normalize(v))
            .collect())
    }

    /// Checks that `schema` names the same conditions in the same order.
    pub fn check_schema(&self, schema: &[String]) -> Result<()> {
        if schema != self.condition_names().as_slice() {
            return Err(Error::Config(format!(
                "condition schema {schema:?} does not match model schema {:?}",
                self.condition_names()
            )));
        }
        Ok(())
    }

    /// Maps a dataset into normalized space without any noise.
    pub fn apply(&self, dataset: &Dataset) -> Result<NormalizedDataset> {
        self.check_schema(dataset.schema())?;
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut inputs = Vec::new();
        let mut input_ids = Vec::with_capacity(dataset.len());
        let mut latencies = Vec::with_capacity(dataset.len());
        for s in dataset.samples() {
            let key: Vec<u64> = s.conditions.iter().map(|c| c.to_bits()).collect();
            let id = match index.get(&key) {
                Some(&id) => id,
                None => {
                    inputs.push(self.normalize_conditions(&s.conditions)?);
                    index.insert(key, inputs.len() - 1);
                    inputs.len() - 1
                }
            };
            input_ids.push(id);
            latencies.push(self.normalize_latency(s.latency_ms));
        }
        Ok(NormalizedDataset {
            inputs,
            input_ids,
            latencies,
        })
    }
}

/// Adds N(0, std²) to every latency, drawn from `seed`'s noise stream.
pub(crate) fn add_noise(latencies: &mut [f64], std: f64, seed: u64) -> Result<()> {
    if std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, std)
        .map_err(|e| Error::Config(format!("noise std {std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Noise));
    for y in latencies.iter_mut() {
        *y += normal.sample(&mut rng);
    }
    Ok(())
}

/// Fits statistics on `dataset`, normalizes it, and adds Gaussian noise of
/// standard deviation `noise_std_ms` (in milliseconds) to each latency once.
/// Only training data should pass through here; evaluation data goes through
/// [`PreprocessStats::apply`].
pub fn preprocess(
    dataset: &Dataset,
    noise_std_ms: f64,
    seed: u64,
) -> Result<(NormalizedDataset, PreprocessStats)> {
    preprocess_scaled(dataset, noise_std_ms, 1.0, seed)
}

pub fn preprocess_scaled(
    dataset: &Dataset,
    noise_std_ms: f64,
    latency_scale_ms: f64,
    seed: u64,
) -> Result<(NormalizedDataset, PreprocessStats)> {
    if !(noise_std_ms.is_finite() && noise_std_ms >= 0.0) {
        return Err(Error::Config(format!("noise std {noise_std_ms} must be nonnegative")));
    }
    let stats = PreprocessStats::fit(dataset, latency_scale_ms)?;
    let mut normalized = stats.apply(dataset)?;
    add_noise(&mut normalized.latencies, noise_std_ms / latency_scale_ms, seed)?;
    Ok((normalized, stats))
}
