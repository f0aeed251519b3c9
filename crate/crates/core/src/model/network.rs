use ndarray::{Array1, Array2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::head::{self, sigmoid, softplus, HeadParams};
use super::ModelConfig;
use crate::dist::SplicedMixtureParams;
use crate::error::{Error, Result};
use crate::seed::{stream_seed, Stream};
use crate::train::{NormalizedDataset, PreprocessStats};

/// One affine layer; `weights` is (outputs × inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Flat gradient, laid out like [`ModelWeights::flat_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

/// Samples grouped by distinct (normalized) condition vector. The network is
/// evaluated once per group; the loss and its gradient are exact sums over
/// all samples regardless of grouping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    inputs: Vec<Vec<f64>>,
    latencies: Vec<Vec<f64>>,
}

impl Batch {
    /// Groups `(x, y)` pairs by bitwise-equal `x`, in order of first appearance.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        let mut batch = Batch::default();
        for (x, y) in pairs {
            match batch
                .inputs
                .iter()
                .position(|c| crate::data::same_bits(c, &x))
            {
                Some(g) => batch.latencies[g].push(y),
                None => {
                    batch.inputs.push(x);
                    batch.latencies.push(vec![y]);
                }
            }
        }
        batch
    }

    /// Batch of the samples at `indices` of a normalized dataset; `latencies`
    /// overrides the dataset's own (used for per-epoch noise).
    pub fn gather(data: &NormalizedDataset, indices: &[usize], latencies: Option<&[f64]>) -> Self {
        let ys = latencies.unwrap_or(&data.latencies);
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); data.inputs.len()];
        for &i in indices {
            groups[data.input_ids[i]].push(ys[i]);
        }
        let mut batch = Batch::default();
        for (input, group) in data.inputs.iter().zip(groups) {
            if !group.is_empty() {
                batch.inputs.push(input.clone());
                batch.latencies.push(group);
            }
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.latencies.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_groups(&self) -> usize {
        self.inputs.len()
    }

    /// `(x, y)` pairs, group by group.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.inputs
            .iter()
            .zip(&self.latencies)
            .flat_map(|(x, ys)| ys.iter().map(move |&y| (x.as_slice(), y)))
    }
}

/// Trained (or freshly initialized) network with the statistics that map raw
/// traces into its normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    stats: PreprocessStats,
    layers: Vec<Layer>,
    seed: u64,
}

struct ForwardTrace {
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Layer inputs: the network input, then each hidden activation.
    post: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ModelWeights {
    /// Fan-in scaled uniform initialization, U(-1/√fan_in, 1/√fan_in) for
    /// weights and biases.
    pub fn init(config: ModelConfig, stats: PreprocessStats, seed: u64) -> Result<Self> {
        config.validate()?;
        if stats.input_dim() != config.input_dim {
            return Err(Error::Config(format!(
                "normalization has {} conditions, config expects {}",
                stats.input_dim(),
                config.input_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, Stream::Init));
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(rows, cols)| {
                let bound = 1.0 / (cols.max(1) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Layer {
                    weights: Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng)),
                    bias: Array1::from_shape_fn(rows, |_| dist.sample(&mut rng)),
                }
            })
            .collect();
        Ok(Self {
            config,
            stats,
            layers,
            seed,
        })
    }

    /// Assembles weights from parts, checking shapes and finiteness.
    pub fn from_parts(
        config: ModelConfig,
        stats: PreprocessStats,
        layers: Vec<Layer>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::Format(format!(
                "expected {} layers, found {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, ((rows, cols), layer)) in shapes.iter().zip(&layers).enumerate() {
            if layer.weights.dim() != (*rows, *cols) || layer.bias.len() != *rows {
                return Err(Error::Format(format!(
                    "layer {i}: expected {rows}x{cols} weights and {rows} biases, found {:?} and {}",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("layer {i} has non-finite entries")));
            }
        }
        if stats.input_dim() != config.input_dim {
            return Err(Error::Format("normalization does not match input width".into()));
        }
        Ok(Self {
            config,
            stats,
            layers,
            seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stats(&self) -> &PreprocessStats {
        &self.stats
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_params(&self) -> usize {
        self.config.num_params()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = params[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    /// Starts the tail threshold at `threshold` for every condition: sets its
    /// output bias and zeroes its incoming weights (GMEVM only).
    pub fn set_threshold_bias(&mut self, threshold: f64) -> Result<()> {
        if self.config.head != super::HeadKind::Gmevm {
            return Err(Error::Config("threshold bias exists only for the GMEVM head".into()));
        }
        let idx = head::threshold_index(self.config.num_centers);
        let last = self.layers.last_mut().expect("at least the output layer");
        last.bias[idx] = threshold;
        last.weights.row_mut(idx).fill(0.0);
        Ok(())
    }

    /// Zeroes the output layer; every condition then maps to the same density.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least the output layer");
        last.weights.fill(0.0);
        last.bias.fill(0.0);
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::Config(format!(
                "condition vector has {} entries, model expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("condition vector must be finite".into()));
        }
        Ok(())
    }

    fn run(&self, inputs: &[Vec<f64>]) -> Result<ForwardTrace> {
        for x in inputs {
            self.check_input(x)?;
        }
        let g = inputs.len();
        let d = self.config.input_dim;
        let x = Array2::from_shape_fn((g, d), |(i, j)| inputs[i][j]);
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut post = vec![x];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let a = post[l].dot(&layer.weights.t()) + &layer.bias;
            if l == last {
                return Ok(ForwardTrace { pre, post, output: a });
            }
            post.push(a.mapv(softplus));
            pre.push(a);
        }
        unreachable!("network has an output layer")
    }

    /// Raw head outputs for one normalized condition vector.
    pub fn forward_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = self.run(&[x.to_vec()])?;
        Ok(trace.output.row(0).to_vec())
    }

    /// Density parameters (normalized latency space) for a normalized condition vector.
    pub fn forward(&self, x: &[f64]) -> Result<SplicedMixtureParams> {
        let raw = self.forward_raw(x)?;
        HeadParams::decode(&raw, self.config.head, self.config.num_centers)?.to_params()
    }

    /// Density parameters for raw (un-normalized) condition values.
    pub fn predict(&self, raw_conditions: &[f64]) -> Result<SplicedMixtureParams> {
        let x = self.stats.normalize_conditions(raw_conditions)?;
        self.forward(&x)
    }

    fn decode_rows(&self, output: &Array2<f64>) -> Result<Vec<HeadParams>> {
        output
            .outer_iter()
            .map(|row| {
                HeadParams::decode(&row.to_vec(), self.config.head, self.config.num_centers)
            })
            .collect()
    }

    /// Mean negative log-likelihood over the batch.
    pub fn nll(&self, batch: &Batch) -> Result<f64> {
        let n = nonempty(batch)?;
        let trace = self.run(&batch.inputs)?;
        let heads = self.decode_rows(&trace.output)?;
        let total: f64 = heads
            .iter()
            .zip(&batch.latencies)
            .map(|(h, ys)| ys.iter().map(|&y| h.nll(y)).sum::<f64>())
            .sum();
        finite_loss(total / n as f64)
    }

    /// Mean negative log-likelihood and its exact gradient with respect to
    /// every weight. At the splice point the branch indicator is held fixed.
    pub fn nll_and_grad(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        let n = nonempty(batch)? as f64;
        let trace = self.run(&batch.inputs)?;
        let heads = self.decode_rows(&trace.output)?;

        let mut d_out = Array2::<f64>::zeros(trace.output.raw_dim());
        let mut total = 0.0;
        let mut scratch = Vec::with_capacity(self.config.num_centers);
        for (g, (h, ys)) in heads.iter().zip(&batch.latencies).enumerate() {
            let mut row = d_out.row_mut(g);
            let row = row.as_slice_mut().expect("standard layout");
            for &y in ys {
                total += h.nll_accumulate(y, row, &mut scratch);
            }
        }
        let loss = finite_loss(total / n)?;
        d_out.mapv_inplace(|v| v / n);

        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for l in (0..self.layers.len()).rev() {
            let d_w = delta.t().dot(&trace.post[l]);
            let d_b = delta.sum_axis(Axis(0));
            if l > 0 {
                let d_h = delta.dot(&self.layers[l].weights);
                delta = d_h * trace.pre[l - 1].mapv(sigmoid);
            }
            grads.push((d_w, d_b));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.num_params());
        for (d_w, d_b) in &grads {
            flat.extend(d_w.iter());
            flat.extend(d_b.iter());
        }
        let grad = Gradient(flat);
        if !grad.is_finite() {
            return Err(Error::abort("non-finite gradient"));
        }
        Ok((loss, grad))
    }
}

fn nonempty(batch: &Batch) -> Result<usize> {
    match batch.len() {
        0 => Err(Error::Domain("negative log-likelihood of an empty batch".into())),
        n => Ok(n),
    }
}

fn finite_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::abort(format!("non-finite loss {loss}")))
    }
}
