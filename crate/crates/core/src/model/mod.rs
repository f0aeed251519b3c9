//! Mixture density network: a fully connected network mapping a normalized
//! condition vector to spliced-mixture parameters, its negative
//! log-likelihood, and exact reverse-mode gradients.

mod head;
mod io;
mod network;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::FORMAT_VERSION;
pub use network::{Batch, Gradient, Layer, ModelWeights};

/// Default hidden layer widths.
pub const DEFAULT_HIDDEN: [usize; 4] = [10, 100, 100, 80];
/// Default number of Gaussian centers.
pub const DEFAULT_CENTERS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Gaussian mixture only.
    Gmm,
    /// Gaussian mixture spliced with a Generalized Pareto tail.
    Gmevm,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Gmm => "gmm",
            HeadKind::Gmevm => "gmevm",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmm" => Ok(HeadKind::Gmm),
            "gmevm" => Ok(HeadKind::Gmevm),
            other => Err(Error::Config(format!("unknown head `{other}` (expected gmm or gmevm)"))),
        }
    }
}

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Softplus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub num_centers: usize,
    pub head: HeadKind,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    /// Default architecture for `input_dim` conditions.
    pub fn new(input_dim: usize, head: HeadKind) -> Self {
        Self {
            input_dim,
            hidden_sizes: DEFAULT_HIDDEN.to_vec(),
            num_centers: DEFAULT_CENTERS,
            head,
            activation: Activation::Softplus,
        }
    }

    /// Raw network outputs: 3 per center, plus threshold, scale and shape for the tail.
    pub fn output_dim(&self) -> usize {
        head::output_dim(self.head, self.num_centers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_centers == 0 {
            return Err(Error::Config("need at least one Gaussian center".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layers must have at least one unit".into()));
        }
        Ok(())
    }

    /// (rows, cols) of every layer's weight matrix, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_sizes);
        widths.push(self.output_dim());
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_output_widths() {
        assert_eq!(ModelConfig::new(1, HeadKind::Gmevm).output_dim(), 48);
        assert_eq!(ModelConfig::new(1, HeadKind::Gmm).output_dim(), 45);
    }

    #[test]
    fn layer_shapes_follow_widths() {
        let c = ModelConfig::new(2, HeadKind::Gmevm);
        assert_eq!(
            c.layer_shapes(),
            vec![(10, 2), (100, 10), (100, 100), (80, 100), (48, 80)]
        );
        // GMM has exactly 3·81 fewer parameters (three output rows with 80 weights and a bias)
        assert_eq!(
            c.num_params() - ModelConfig::new(2, HeadKind::Gmm).num_params(),
            3 * 81
        );
    }

    #[test]
    fn head_parse() {
        assert_eq!("GMEVM".parse::<HeadKind>().unwrap(), HeadKind::Gmevm);
        assert_eq!("gmm".parse::<HeadKind>().unwrap(), HeadKind::Gmm);
        assert!("evt".parse::<HeadKind>().is_err());
    }
}
