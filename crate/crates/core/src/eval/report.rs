use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    analytic_ccdf, analytic_grid, empirical_ccdf, empirical_grid, ensemble_bands, grid_levels,
    predict_ccdf, tail_error, Band, CcdfCurve, TailMetric,
};
use crate::data::{Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{HeadKind, ModelWeights};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Where the reference curve of each condition comes from.
#[derive(Debug, Clone, Copy)]
pub enum Truth<'a> {
    /// Held-out samples; tail levels below 1/n are unavailable.
    Empirical(&'a Dataset),
    /// Known generator law; every level is available.
    Analytic(&'a SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub seed: u64,
    pub csv: String,
    pub curve: CcdfCurve,
    pub metrics: Vec<TailMetric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionReport {
    pub condition: Vec<f64>,
    /// "empirical" or "analytic".
    pub truth_kind: String,
    /// Evaluation samples behind an empirical truth (0 for analytic).
    pub truth_samples: usize,
    pub empirical: String,
    pub truth: CcdfCurve,
    pub models: Vec<ModelEntry>,
    pub band_csv: String,
    pub band: Band,
    /// Errors of the ensemble-average curve.
    pub metrics: Vec<TailMetric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub format_version: u32,
    /// Describes the tail-error metric, which is a constructed measure.
    pub metric_definition: String,
    pub head_kind: HeadKind,
    pub condition_names: Vec<String>,
    pub seeds: Vec<u64>,
    pub levels: Vec<f64>,
    pub conditions: Vec<ConditionReport>,
}

const METRIC_DEFINITION: &str = "tail_error (constructed metric): log10 of the predicted CCDF at the \
truth's quantile divided by the level, and predicted minus truth quantile in ms; levels the truth \
cannot resolve (below 1/n for empirical truth) are null";

/// Runs the evaluation protocol: per condition, the truth curve on a grid of
/// its own quantiles, every model's predicted curve, the min/avg/max band and
/// tail errors.
pub fn evaluate(models: &[ModelWeights], truth: Truth<'_>, levels: &[f64]) -> Result<EvaluationReport> {
    let first = models
        .first()
        .ok_or_else(|| Error::Config("evaluation needs at least one model".into()))?;
    let names = first.stats().condition_names();
    let head = first.config().head;
    for m in models {
        if m.stats().condition_names() != names {
            return Err(Error::Config("models disagree on the condition schema".into()));
        }
    }
    let schema: &[String] = match truth {
        Truth::Empirical(d) => d.schema(),
        Truth::Analytic(s) => &s.condition_names,
    };
    if schema != names.as_slice() {
        return Err(Error::Config(format!(
            "truth conditions {schema:?} do not match model conditions {names:?}"
        )));
    }

    let grid_levels = grid_levels(levels);
    let cases: Vec<(Vec<f64>, CcdfCurve, usize)> = match truth {
        Truth::Empirical(d) => d
            .distinct_conditions()
            .into_iter()
            .map(|c| {
                let ys = d.latencies_at(&c);
                let grid = empirical_grid(&ys, &grid_levels)?;
                let curve = empirical_ccdf(&ys, &grid)?;
                Ok((c, curve, ys.len()))
            })
            .collect::<Result<_>>()?,
        Truth::Analytic(s) => s
            .grid
            .iter()
            .map(|p| {
                let grid = analytic_grid(&p.theta, &grid_levels)?;
                Ok((p.conditions.clone(), analytic_ccdf(&p.theta, &grid)?, 0))
            })
            .collect::<Result<_>>()?,
    };

    let mut conditions = Vec::with_capacity(cases.len());
    for (ci, (condition, mut truth_curve, n)) in cases.into_iter().enumerate() {
        truth_curve.condition = condition.clone();
        let grid = truth_curve.grid.clone();
        let mut entries = Vec::with_capacity(models.len());
        let mut curves = Vec::with_capacity(models.len());
        for (mi, m) in models.iter().enumerate() {
            let curve = predict_ccdf(m, &condition, &grid)?;
            entries.push(ModelEntry {
                seed: m.seed(),
                csv: format!("cond{ci}_model{mi}.csv"),
                metrics: tail_error(&curve, &truth_curve, levels)?,
                curve: curve.clone(),
            });
            curves.push(curve);
        }
        let band = ensemble_bands(&curves)?;
        let metrics = tail_error(&band.avg_curve(&grid, &condition), &truth_curve, levels)?;
        conditions.push(ConditionReport {
            condition,
            truth_kind: truth_curve.label.clone(),
            truth_samples: n,
            empirical: format!("cond{ci}_truth.csv"),
            truth: truth_curve,
            models: entries,
            band_csv: format!("cond{ci}_band.csv"),
            band,
            metrics,
        });
    }
    Ok(EvaluationReport {
        format_version: REPORT_FORMAT_VERSION,
        metric_definition: METRIC_DEFINITION.into(),
        head_kind: head,
        condition_names: names,
        seeds: models.iter().map(ModelWeights::seed).collect(),
        levels: levels.to_vec(),
        conditions,
    })
}

fn curve_csv(grid: &[f64], probs: &[f64]) -> String {
    let mut out = String::from("latency_ms,prob\n");
    for (y, p) in grid.iter().zip(probs) {
        out.push_str(&format!("{y:?},{p:?}\n"));
    }
    out
}

fn write(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

impl EvaluationReport {
    /// Writes `report.json` and the per-curve CSVs into `dir`.
    pub fn emit(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for c in &self.conditions {
            write(&dir.join(&c.empirical), &curve_csv(&c.truth.grid, &c.truth.probs))?;
            for m in &c.models {
                write(&dir.join(&m.csv), &curve_csv(&m.curve.grid, &m.curve.probs))?;
            }
            let mut band = String::from("latency_ms,min,avg,max\n");
            for (j, y) in c.truth.grid.iter().enumerate() {
                band.push_str(&format!(
                    "{y:?},{:?},{:?},{:?}\n",
                    c.band.min[j], c.band.avg[j], c.band.max[j]
                ));
            }
            write(&dir.join(&c.band_csv), &band)?;
        }
        write(&dir.join("report.json"), &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("report: {e}")))?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported report version {}",
                report.format_version
            )));
        }
        Ok(report)
    }
}
