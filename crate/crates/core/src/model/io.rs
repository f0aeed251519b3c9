//! Self-describing JSON model documents.
//!
//! Floats are written in shortest roundtrip form and parsed with correct
//! rounding, so `load(save(w)) == w` bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, HeadKind, Layer, ModelConfig, ModelWeights};
use crate::error::{Error, Result};
use crate::train::PreprocessStats;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    config: ConfigDoc,
    normalization: PreprocessStats,
    layers: Vec<LayerDoc>,
    head_kind: HeadKind,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    input_dim: usize,
    hidden_sizes: Vec<usize>,
    num_centers: usize,
    activation: Activation,
    output_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ModelWeights {
    pub fn to_json(&self) -> Result<String> {
        let config = self.config();
        let doc = ModelDoc {
            format_version: FORMAT_VERSION,
            config: ConfigDoc {
                input_dim: config.input_dim,
                hidden_sizes: config.hidden_sizes.clone(),
                num_centers: config.num_centers,
                activation: config.activation,
                output_dim: config.output_dim(),
            },
            normalization: self.stats().clone(),
            layers: self
                .layers()
                .iter()
                .map(|l| LayerDoc {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            head_kind: config.head,
            seed: self.seed(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model document: {e}")))?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let config = ModelConfig {
            input_dim: doc.config.input_dim,
            hidden_sizes: doc.config.hidden_sizes,
            num_centers: doc.config.num_centers,
            head: doc.head_kind,
            activation: doc.config.activation,
        };
        if config.output_dim() != doc.config.output_dim {
            return Err(Error::Format(format!(
                "output_dim {} inconsistent with {} head of {} centers",
                doc.config.output_dim, config.head, config.num_centers
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let weights = Array2::from_shape_vec((l.rows, l.cols), l.weights).map_err(|_| {
                    Error::Format(format!("layer {i}: weight count does not match {}x{}", l.rows, l.cols))
                })?;
                Ok(Layer {
                    weights,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ModelWeights::from_parts(config, doc.normalization, layers, doc.seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::ConditionStats;

    fn model() -> ModelWeights {
        let stats = PreprocessStats {
            latency_mean: 7.123_456_789_012_345,
            latency_scale: 1.0,
            conditions: vec![ConditionStats {
                name: "mcs".into(),
                min: 3.0,
                max: 7.0,
            }],
        };
        ModelWeights::init(ModelConfig::new(1, HeadKind::Gmevm), stats, 99).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let w = model();
        let back = ModelWeights::from_json(&w.to_json().unwrap()).unwrap();
        assert_eq!(back, w);
        let a: Vec<u64> = w.flat_params().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.flat_params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = model().to_json().unwrap();
        let tampered = text.replacen("\"seed\"", "\"sed\"", 1);
        assert!(matches!(ModelWeights::from_json(&tampered), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch() {
        let text = model().to_json().unwrap();
        let tampered = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(ModelWeights::from_json(&tampered), Err(Error::Format(_))));
    }

    #[test]
    fn inconsistent_output_dim() {
        let text = model().to_json().unwrap();
        let tampered = text.replacen("\"output_dim\": 48", "\"output_dim\": 45", 1);
        assert!(matches!(ModelWeights::from_json(&tampered), Err(Error::Format(_))));
        let wrong_head = text.replacen("\"head_kind\": \"gmevm\"", "\"head_kind\": \"gmm\"", 1);
        assert!(ModelWeights::from_json(&wrong_head).is_err());
    }

    #[test]
    fn missing_field_is_not_defaulted() {
        let text = model().to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("normalization");
        assert!(ModelWeights::from_json(&v.to_string()).is_err());
    }
}
