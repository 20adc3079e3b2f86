//! Per-update metrics and their JSONL / CSV serialization.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Snapshot after update `t`. Solution fields are `None` on updates where no
/// solution was retrieved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: u64,
    /// `+ id` or `- id`.
    pub op: String,
    #[serde(rename = "f_V")]
    pub f_v: Option<f64>,
    pub chosen_index: Option<i64>,
    pub solution_size: Option<usize>,
    pub solution_cost: Option<f64>,
    pub f_solution: Option<f64>,
    /// `f_solution / f_V`, and 1 when `f_V = 0`.
    pub coverage_ratio: Option<f64>,
    pub oracle_calls_cumulative: u64,
    pub reconstructions_triggered: u64,
}

const CSV_HEADER: [&str; 10] = [
    "t",
    "op",
    "f_V",
    "chosen_index",
    "solution_size",
    "solution_cost",
    "f_solution",
    "coverage_ratio",
    "oracle_calls_cumulative",
    "reconstructions_triggered",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Jsonl,
    Csv,
}

/// One JSON object per line, keys in field order.
pub fn write_jsonl<W: Write>(records: &[MetricsRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_csv<W: Write>(records: &[MetricsRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_report(
    records: &[MetricsRecord],
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    match format {
        ReportFormat::Jsonl => write_jsonl(records, file).map_err(|e| Error::io(path, e)),
        ReportFormat::Csv => write_csv(records, file).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        }),
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(records)
}
