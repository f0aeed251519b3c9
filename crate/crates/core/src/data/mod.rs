//! Latency traces: in-memory datasets, CSV ingestion, splitting and the
//! synthetic ground-truth generator.

mod csv_io;
mod synthetic;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, write_csv, CsvSchema, LATENCY_COLUMN};
pub use synthetic::{generate_synthetic, GridPoint, SyntheticSpec};

/// One observation: end-to-end latency and the transmission conditions it was measured under.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencySample {
    pub latency_ms: f64,
    pub conditions: Vec<f64>,
}

/// Periodic traffic profile of a trace: fixed packet length every fixed period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceProfile {
    pub packet_length_bytes: f64,
    pub period_ms: f64,
}

impl Default for TraceProfile {
    fn default() -> Self {
        Self {
            packet_length_bytes: 172.0,
            period_ms: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    File(PathBuf),
    Synthetic(Box<SyntheticSpec>),
    /// Subset produced by `split` from another dataset.
    Split { parent: Box<Provenance>, seed: u64, part: SplitPart },
    InMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub source: Provenance,
    pub profile: Option<TraceProfile>,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self {
            source: Provenance::InMemory,
            profile: None,
        }
    }
}

/// Ordered latency samples sharing one condition schema. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<String>,
    samples: Vec<LatencySample>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(schema: Vec<String>, samples: Vec<LatencySample>, meta: DatasetMeta) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            validate_sample(s, schema.len()).map_err(|m| Error::ingestion(Some(i), m))?;
        }
        Ok(Self {
            schema,
            samples,
            meta,
        })
    }

    /// Unconditional dataset from bare latencies.
    pub fn from_latencies(latencies: &[f64]) -> Result<Self> {
        let samples = latencies
            .iter()
            .map(|&latency_ms| LatencySample {
                latency_ms,
                conditions: Vec::new(),
            })
            .collect();
        Self::new(Vec::new(), samples, DatasetMeta::default())
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn samples(&self) -> &[LatencySample] {
        &self.samples
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn latencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.latency_ms)
    }

    /// Ground truth, when the data came from the synthetic generator.
    pub fn synthetic_spec(&self) -> Option<&SyntheticSpec> {
        let mut source = &self.meta.source;
        loop {
            match source {
                Provenance::Synthetic(spec) => return Some(spec),
                Provenance::Split { parent, .. } => source = parent,
                _ => return None,
            }
        }
    }

    /// Distinct condition vectors in order of first appearance.
    pub fn distinct_conditions(&self) -> Vec<Vec<f64>> {
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for s in &self.samples {
            if !seen.iter().any(|c| same_bits(c, &s.conditions)) {
                seen.push(s.conditions.clone());
            }
        }
        seen
    }

    /// Latencies of the samples measured under exactly `conditions`.
    pub fn latencies_at(&self, conditions: &[f64]) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| same_bits(&s.conditions, conditions))
            .map(|s| s.latency_ms)
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c == name)
    }

    pub(crate) fn with_samples(&self, samples: Vec<LatencySample>, source: Provenance) -> Self {
        Self {
            schema: self.schema.clone(),
            samples,
            meta: DatasetMeta {
                source,
                profile: self.meta.profile,
            },
        }
    }
}

pub(crate) fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn validate_sample(s: &LatencySample, dim: usize) -> std::result::Result<(), String> {
    if !s.latency_ms.is_finite() || s.latency_ms <= 0.0 {
        return Err(format!("latency {} must be positive and finite", s.latency_ms));
    }
    if s.conditions.len() != dim {
        return Err(format!(
            "sample has {} condition values, schema has {dim}",
            s.conditions.len()
        ));
    }
    if s.conditions.iter().any(|c| !c.is_finite()) {
        return Err("condition values must be finite".into());
    }
    Ok(())
}

/// Uniform random split without replacement. The train part receives
/// `round(n · train_fraction)` samples; both parts keep the original order.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (s, keep) in dataset.samples.iter().zip(&in_train) {
        if *keep {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    let parent = Box::new(dataset.meta.source.clone());
    Ok((
        dataset.with_samples(
            train,
            Provenance::Split {
                parent: parent.clone(),
                seed,
                part: SplitPart::Train,
            },
        ),
        dataset.with_samples(
            test,
            Provenance::Split {
                parent,
                seed,
                part: SplitPart::Test,
            },
        ),
    ))
}
