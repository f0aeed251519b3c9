use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Dataset, DatasetMeta, LatencySample, Provenance};
use crate::error::{Error, Result};

pub const LATENCY_COLUMN: &str = "latency_ms";

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub latency_column: String,
    /// Condition columns to read, in this order. `None` takes every other column.
    pub conditions: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            latency_column: LATENCY_COLUMN.to_string(),
            conditions: None,
        }
    }
}

impl CsvSchema {
    pub fn with_conditions(conditions: &[&str]) -> Self {
        Self {
            latency_column: LATENCY_COLUMN.to_string(),
            conditions: Some(conditions.iter().map(|s| s.to_string()).collect()),
        }
    }
}

/// Reads a headered CSV file. Rows are numbered from 1 (first data row) in errors.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::ingestion(None, format!("missing column `{name}`")))
    };
    let latency_idx = find(&schema.latency_column)?;
    let condition_names: Vec<String> = match &schema.conditions {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != latency_idx)
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let condition_idx = condition_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;
    for (i, h) in headers.iter().enumerate() {
        if i != latency_idx && !condition_idx.contains(&i) {
            log::warn!("{}: ignoring column `{}`", path.display(), h);
        }
    }

    let parse = |field: Option<&str>, column: &str, row: usize| -> Result<f64> {
        let raw = field.ok_or_else(|| Error::ingestion(Some(row), format!("missing `{column}` field")))?;
        raw.trim().parse::<f64>().map_err(|_| {
            Error::ingestion(Some(row), format!("cannot parse `{raw}` in column `{column}`"))
        })
    };

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::ingestion(Some(row), e.to_string()))?;
        let latency_ms = parse(record.get(latency_idx), &schema.latency_column, row)?;
        if !latency_ms.is_finite() || latency_ms <= 0.0 {
            return Err(Error::ingestion(
                Some(row),
                format!("latency {latency_ms} must be positive and finite"),
            ));
        }
        let conditions = condition_idx
            .iter()
            .zip(&condition_names)
            .map(|(&c, name)| parse(record.get(c), name, row))
            .collect::<Result<Vec<_>>>()?;
        samples.push(LatencySample {
            latency_ms,
            conditions,
        });
    }
    log::info!("{}: read {} rows", path.display(), samples.len());
    Dataset::new(
        condition_names,
        samples,
        DatasetMeta {
            source: Provenance::File(path.to_path_buf()),
            profile: None,
        },
    )
}

/// Writes `latency_ms` followed by the condition columns; floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec![LATENCY_COLUMN.to_string()];
    header.extend(dataset.schema().iter().cloned());
    writer.write_record(&header)?;
    let mut fields = Vec::with_capacity(header.len());
    for s in dataset.samples() {
        fields.clear();
        fields.push(fmt_f64(s.latency_ms));
        fields.extend(s.conditions.iter().map(|&c| fmt_f64(c)));
        writer.write_record(&fields)?;
    }
    let mut inner = writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Shortest roundtrip decimal.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
