use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use tailprob::data::{generate_synthetic, load_csv, split, write_csv, CsvSchema, SyntheticSpec};
use tailprob::eval::{evaluate, Truth, DEFAULT_LEVELS};
use tailprob::model::{HeadKind, ModelConfig, ModelWeights};
use tailprob::train::{train_ensemble, write_trace, TrainConfig};
use tailprob::Error;

#[derive(Debug, Parser)]
#[command(name = "tailprob", version, about = "Conditional latency tail-probability prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with known ground truth.
    Generate(GenerateArgs),
    /// Train an ensemble of density models on a CSV dataset.
    Train(TrainArgs),
    /// Compare models against empirical or analytic ground truth.
    Evaluate(EvaluateArgs),
    /// Tail probability or latency quantile for one condition.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Three packet lengths, heavier tails for longer packets.
    PacketLength,
    /// Five MCS indices, lighter tails for higher indices.
    Mcs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Synthetic spec (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in conditional sweep instead of a spec file.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Samples per condition for a preset.
    #[arg(long, default_value_t = 10_000, requires = "preset")]
    pub samples: usize,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; the ground truth goes next to it as `<stem>.truth.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data (CSV with a `latency_ms` column).
    #[arg(long)]
    pub data: PathBuf,
    /// Condition columns, comma separated; default is every other column.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Option<Vec<String>>,
    /// Training config (JSON); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub head: Option<HeadKind>,
    /// Standard deviation of Gaussian noise added to training latencies.
    #[arg(long)]
    pub noise_std_ms: Option<f64>,
    /// Number of ensemble members.
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Fraction used for training; the rest is written to `heldout.csv`.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Members trained concurrently. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model files, or directories holding `model_*.json`.
    #[arg(long, num_args = 1.., required = true)]
    pub models: Vec<PathBuf>,
    /// Empirical ground truth (CSV).
    #[arg(long, conflicts_with = "truth", required_unless_present = "truth")]
    pub data: Option<PathBuf>,
    /// Analytic ground truth sidecar written by `generate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Tail levels for the error metric, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Condition value as `name=value`; repeat for each condition.
    #[arg(long = "condition", value_parser = parse_condition)]
    pub conditions: Vec<(String, f64)>,
    /// Print P[Y > latency].
    #[arg(long, conflicts_with = "level", required_unless_present = "level")]
    pub latency: Option<f64>,
    /// Print the latency at this reliability level, e.g. 0.99999.
    #[arg(long)]
    pub level: Option<f64>,
}

fn parse_condition(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|e| format!("bad value for `{name}`: {e}"))?;
    if !value.is_finite() {
        return Err(format!("value for `{name}` must be finite"));
    }
    Ok((name.trim().to_string(), value))
}

/// Settings file for `train`. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub train: TrainConfig,
    pub head: Option<HeadKind>,
    pub hidden_sizes: Option<Vec<usize>>,
    pub num_centers: Option<usize>,
    pub train_fraction: Option<f64>,
    pub conditions: Option<Vec<String>>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn truth_path(out: &Path) -> PathBuf {
    out.with_extension("truth.json")
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut spec: SyntheticSpec = match (&a.spec, a.preset) {
        (Some(path), _) => read_json(path)?,
        (None, Some(Preset::PacketLength)) => {
            SyntheticSpec::packet_length_sweep(&[172.0, 3440.0, 6880.0], a.samples, 0)?
        }
        (None, Some(Preset::Mcs)) => {
            SyntheticSpec::mcs_sweep(&[3.0, 5.0, 7.0, 9.0, 11.0], a.samples, 0)?
        }
        (None, None) => bail!("either --spec or --preset is required"),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let dataset = generate_synthetic(&spec)?;
    ensure_parent(&a.out)?;
    write_csv(&dataset, &a.out)?;
    let sidecar = truth_path(&a.out);
    fs::write(&sidecar, serde_json::to_string_pretty(&spec)?)
        .with_context(|| format!("writing {}", sidecar.display()))?;
    eprintln!(
        "wrote {} samples to {} and ground truth to {}",
        dataset.len(),
        a.out.display(),
        sidecar.display()
    );
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn model_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("model_{index:02}.json"))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let file: TrainFile = match &a.config {
        Some(path) => read_json(path)?,
        None => TrainFile::default(),
    };
    let mut config = file.train;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(std) = a.noise_std_ms {
        config.noise_std_ms = std;
    }
    if let Some(k) = a.ensemble {
        config.ensemble_size = k;
    }
    config.validate()?;
    let head = a.head.or(file.head).unwrap_or(HeadKind::Gmevm);
    let train_fraction = a.train_fraction.or(file.train_fraction).unwrap_or(1.0);
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        bail!("--train-fraction {train_fraction} outside (0, 1]");
    }
    if a.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let schema = CsvSchema {
        conditions: a.conditions.or(file.conditions),
        ..CsvSchema::default()
    };

    let dataset = load_csv(&a.data, &schema)?;
    let mut model = ModelConfig::new(dataset.schema().len(), head);
    if let Some(h) = file.hidden_sizes {
        model.hidden_sizes = h;
    }
    if let Some(k) = file.num_centers {
        model.num_centers = k;
    }
    model.validate()?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let train_set = if train_fraction < 1.0 {
        let (train, heldout) = split(&dataset, train_fraction, config.seed)?;
        write_csv(&heldout, a.out.join("heldout.csv"))?;
        train
    } else {
        dataset
    };

    let outcome = train_ensemble(&train_set, &model, &config, a.jobs)?;
    for (i, member) in &outcome.members {
        member.weights.save(model_file(&a.out, *i))?;
        write_trace(&member.trace, a.out.join(format!("trace_{i:02}.csv")))?;
    }
    for (i, err) in &outcome.failures {
        if let Error::TrainingAbort(abort) = err {
            if let Some(last) = &abort.last_good {
                let path = a.out.join(format!("model_{i:02}.partial.json"));
                last.save(&path)?;
                eprintln!("member {i}: last good weights kept in {}", path.display());
            }
        }
        eprintln!("member {i} failed: {err}");
    }
    if !outcome.is_complete() {
        bail!(
            "{} of {} ensemble members failed",
            outcome.failures.len(),
            config.ensemble_size
        );
    }
    eprintln!(
        "trained {} {head} model(s) into {}",
        outcome.members.len(),
        a.out.display()
    );
    Ok(())
}

/// Expands directories to their `model_NN.json` files, in name order.
pub fn collect_models(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("model_") && n.ends_with(".json") && !n.contains(".partial"))
                })
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("no model files in {}", p.display());
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let models = collect_models(&a.models)?
        .iter()
        .map(|p| ModelWeights::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let levels = a.levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        bail!("tail levels must lie in (0, 1)");
    }
    let report = match (&a.data, &a.truth) {
        (Some(data), _) => {
            let names = models[0].stats().condition_names();
            let schema = CsvSchema {
                conditions: Some(names),
                ..CsvSchema::default()
            };
            let dataset = load_csv(data, &schema)?;
            evaluate(&models, Truth::Empirical(&dataset), &levels)?
        }
        (None, Some(truth)) => {
            let spec: SyntheticSpec = read_json(truth)?;
            spec.validate()?;
            evaluate(&models, Truth::Analytic(&spec), &levels)?
        }
        (None, None) => bail!("either --data or --truth is required"),
    };
    report.emit(&a.out)?;
    eprintln!(
        "evaluated {} model(s) on {} condition(s) into {}",
        models.len(),
        report.conditions.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = ModelWeights::load(&a.model)?;
    let names = model.stats().condition_names();
    for (name, _) in &a.conditions {
        if !names.contains(name) {
            bail!("model has no condition `{name}` (expects {names:?})");
        }
    }
    let raw = names
        .iter()
        .map(|n| {
            let mut hits = a.conditions.iter().filter(|(c, _)| c == n);
            match (hits.next(), hits.next()) {
                (Some((_, v)), None) => Ok(*v),
                (None, _) => bail!("missing --condition {n}=<value>"),
                (Some(_), Some(_)) => bail!("condition `{n}` given more than once"),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let theta = model.predict(&raw)?;
    let stats = model.stats();
    match (a.latency, a.level) {
        (Some(y), None) => println!("{}", theta.ccdf(stats.normalize_latency(y))),
        (None, Some(r)) => {
            if !(r > 0.0 && r < 1.0) {
                bail!("--level {r} outside (0, 1)");
            }
            println!("{}", stats.denormalize_latency(theta.upper_quantile(1.0 - r)?));
        }
        _ => bail!("give exactly one of --latency or --level"),
    }
    Ok(())
}
