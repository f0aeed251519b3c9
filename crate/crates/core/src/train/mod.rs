//! Preprocessing, Adam, the staged learning-rate schedule and seeded ensembles.

mod adam;
mod preprocess;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result, TrainingAbort};
use crate::model::{Batch, HeadKind, ModelConfig, ModelWeights};
use crate::seed::{derive_seed, stream_seed, Stream};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use preprocess::{
    preprocess, preprocess_scaled, ConditionStats, NormalizedDataset, PreprocessStats,
};

/// Fixed number of epochs at one learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Round {
    pub epochs: usize,
    pub learning_rate: f64,
}

/// When training-latency noise is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Once per sample, before training.
    #[default]
    Fixed,
    /// Redrawn every epoch.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: Vec<Round>,
    pub batch_fraction: f64,
    /// Standard deviation of the Gaussian noise added to training latencies, in ms.
    pub noise_std_ms: f64,
    pub noise_mode: NoiseMode,
    pub ensemble_size: usize,
    pub seed: u64,
    /// Normalized latency = (latency - mean) / latency_scale_ms.
    pub latency_scale_ms: f64,
    /// Training-latency quantile the GMEVM threshold starts at.
    pub threshold_init_quantile: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: [1e-2, 1e-3, 1e-4, 1e-5]
                .iter()
                .map(|&learning_rate| Round {
                    epochs: 200,
                    learning_rate,
                })
                .collect(),
            batch_fraction: 1.0 / 8.0,
            noise_std_ms: 0.0,
            noise_mode: NoiseMode::Fixed,
            ensemble_size: 10,
            seed: 0,
            latency_scale_ms: 1.0,
            threshold_init_quantile: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds.is_empty() {
            return Err(Error::Config("training needs at least one round".into()));
        }
        let mut prev = f64::INFINITY;
        for (i, r) in self.rounds.iter().enumerate() {
            if !(r.learning_rate.is_finite() && r.learning_rate > 0.0) {
                return Err(Error::Config(format!("round {i}: learning rate must be positive")));
            }
            if r.learning_rate > prev {
                return Err(Error::Config(format!(
                    "round {i}: learning rate {} increases over the previous round",
                    r.learning_rate
                )));
            }
            prev = r.learning_rate;
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "batch fraction {} outside (0, 1]",
                self.batch_fraction
            )));
        }
        if !(self.noise_std_ms.is_finite() && self.noise_std_ms >= 0.0) {
            return Err(Error::Config("noise std must be nonnegative".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        if !(self.threshold_init_quantile > 0.0 && self.threshold_init_quantile < 1.0) {
            return Err(Error::Config("threshold init quantile outside (0, 1)".into()));
        }
        if !(self.latency_scale_ms.is_finite() && self.latency_scale_ms > 0.0) {
            return Err(Error::Config("latency scale must be positive".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.rounds.iter().map(|r| r.epochs).sum()
    }

    /// ceil(n · batch_fraction), at least 1.
    pub fn batch_size(&self, n: usize) -> usize {
        ((n as f64 * self.batch_fraction).ceil() as usize).clamp(1, n.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub round: usize,
    pub lr: f64,
    pub mean_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub trace: Vec<EpochRecord>,
    /// Optimizer steps taken.
    pub steps: u64,
}

/// Empirical quantile (nearest rank) of unsorted values.
fn quantile_of(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

/// Trains one model on `dataset` (raw milliseconds; preprocessing is applied here).
/// Single-threaded and a pure function of its inputs.
pub fn train(dataset: &Dataset, model: &ModelConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    if model.input_dim != dataset.schema().len() {
        return Err(Error::Config(format!(
            "model expects {} conditions, dataset has {:?}",
            model.input_dim,
            dataset.schema()
        )));
    }
    let fixed_noise = match config.noise_mode {
        NoiseMode::Fixed => config.noise_std_ms,
        NoiseMode::PerEpoch => 0.0,
    };
    let (data, stats) = preprocess_scaled(dataset, fixed_noise, config.latency_scale_ms, config.seed)?;
    let per_epoch_noise = match config.noise_mode {
        NoiseMode::PerEpoch if config.noise_std_ms > 0.0 => {
            Some(config.noise_std_ms / config.latency_scale_ms)
        }
        _ => None,
    };

    let mut weights = ModelWeights::init(model.clone(), stats, config.seed)?;
    if model.head == HeadKind::Gmevm {
        weights.set_threshold_bias(quantile_of(&data.latencies, config.threshold_init_quantile))?;
    }

    let n = data.len();
    let batch_size = config.batch_size(n);
    let mut params = weights.flat_params();
    let mut adam = AdamState::new(params.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, Stream::Shuffle));
    let mut order: Vec<usize> = (0..n).collect();
    let mut noisy = per_epoch_noise.map(|_| data.latencies.clone());
    let mut trace = Vec::with_capacity(config.total_epochs());

    let mut epoch = 0;
    for (round_idx, round) in config.rounds.iter().enumerate() {
        for _ in 0..round.epochs {
            if let (Some(std), Some(buf)) = (per_epoch_noise, noisy.as_mut()) {
                buf.copy_from_slice(&data.latencies);
                let epoch_seed = derive_seed(config.seed, epoch as u64);
                preprocess::add_noise(buf, std, epoch_seed)?;
            }
            order.shuffle(&mut shuffle_rng);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(batch_size) {
                let batch = Batch::gather(&data, chunk, noisy.as_deref());
                let step = weights
                    .nll_and_grad(&batch)
                    .and_then(|(loss, grad)| {
                        adam_step(&mut params, grad.as_slice(), &mut adam, round.learning_rate)?;
                        Ok(loss)
                    });
                let loss = match step {
                    Ok(loss) => loss,
                    Err(Error::TrainingAbort(abort)) => {
                        return Err(Error::TrainingAbort(Box::new(TrainingAbort {
                            reason: abort.reason,
                            epoch: Some(epoch),
                            last_good: Some(weights),
                        })))
                    }
                    Err(e) => return Err(e),
                };
                if params.iter().any(|p| !p.is_finite()) {
                    return Err(Error::TrainingAbort(Box::new(TrainingAbort {
                        reason: "weights diverged".into(),
                        epoch: Some(epoch),
                        last_good: Some(weights),
                    })));
                }
                weights.set_flat_params(&params)?;
                loss_sum += loss * chunk.len() as f64;
            }
            let record = EpochRecord {
                epoch,
                round: round_idx,
                lr: round.learning_rate,
                mean_nll: loss_sum / n as f64,
            };
            log::debug!("epoch {epoch} round {round_idx} nll {:.6}", record.mean_nll);
            trace.push(record);
            epoch += 1;
        }
    }
    Ok(TrainOutcome {
        weights,
        trace,
        steps: adam.steps(),
    })
}

/// Loss trace as CSV: `epoch,round,lr,mean_nll`.
pub fn write_trace(trace: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,round,lr,mean_nll\n");
    for r in trace {
        out.push_str(&format!("{},{},{:?},{:?}\n", r.epoch, r.round, r.lr, r.mean_nll));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Seed of ensemble member `index`.
pub fn member_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// Outcome of an ensemble run. Members are listed in index order.
#[derive(Debug)]
pub struct EnsembleOutcome {
    pub members: Vec<(usize, TrainOutcome)>,
    pub failures: Vec<(usize, Error)>,
}

impl EnsembleOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Trains `config.ensemble_size` independent members, member `i` seeded with
/// [`member_seed`]. With `jobs > 1` members run concurrently; results do not
/// depend on `jobs`.
pub fn train_ensemble(
    dataset: &Dataset,
    model: &ModelConfig,
    config: &TrainConfig,
    jobs: usize,
) -> Result<EnsembleOutcome> {
    config.validate()?;
    let run = |i: usize| {
        let member = TrainConfig {
            seed: member_seed(config.seed, i),
            ..config.clone()
        };
        (i, train(dataset, model, &member))
    };
    let results: Vec<(usize, Result<TrainOutcome>)> = if jobs <= 1 {
        (0..config.ensemble_size).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..config.ensemble_size).into_par_iter().map(run).collect())
    };
    let mut outcome = EnsembleOutcome {
        members: Vec::new(),
        failures: Vec::new(),
    };
    for (i, r) in results {
        match r {
            Ok(o) => outcome.members.push((i, o)),
            Err(e) => outcome.failures.push((i, e)),
        }
    }
    Ok(outcome)
}
