//! Run artifacts: manifests, metrics, run logs, expression files, and the
//! machine-readable error channel.

use std::path::{Path, PathBuf};

use consparse::symbolic::{render, Expr, Format};
use consparse::train::{RunRecord, TrainConfig};
use consparse::{Error, Result};
use serde::Serialize;

/// Map a crate error onto its stable machine-readable tag.
pub fn error_tag(err: &Error) -> &'static str {
    match err {
        Error::NonFiniteValue { .. } => "NonFiniteValue",
        Error::InvalidNoise { .. } => "InvalidNoise",
        Error::ShapeError { .. } => "ShapeError",
        Error::InvalidDeformation(_) => "InvalidDeformation",
        Error::EmptyDataset => "EmptyDataset",
        Error::TooFewPoints { .. } => "TooFewPoints",
        Error::ConvergenceError(_) => "ConvergenceError",
        Error::NonFiniteGradient { .. } => "NonFiniteGradient",
        Error::UnknownDataset(_) => "UnknownDataset",
        Error::MissingColumn(_) => "MissingColumn",
        Error::NonNumeric { .. } => "NonNumeric",
        Error::NonMonotoneStrain { .. } => "NonMonotoneStrain",
        Error::SamplingError(_) => "SamplingError",
        Error::Io(_) => "Io",
    }
}

pub fn error_json(err: &Error) -> String {
    serde_json::json!({ "error": error_tag(err), "detail": err.to_string() }).to_string()
}

/// FNV-1a 64-bit, hex encoded; identifies dataset content in manifests.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub problem: String,
    pub dataset: DatasetIdentity,
    pub config: &'a TrainConfig,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
pub struct DatasetIdentity {
    pub name: String,
    pub rows: usize,
    pub hash: String,
}

pub fn dataset_identity(ds: &consparse::data::Dataset) -> DatasetIdentity {
    let json = serde_json::to_string(ds).expect("dataset serializes");
    DatasetIdentity {
        name: ds.name().to_string(),
        rows: ds.len(),
        hash: content_hash(json.as_bytes()),
    }
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(e.to_string()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::Io(e.to_string()))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    write_text(dir, name, &text)
}

/// Selected run history as the run-log CSV.
pub fn run_log_csv(record: &RunRecord) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,active_params,penalty\n");
    for h in &record.history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch, h.train_loss, h.val_loss, h.active_params, h.penalty
        ));
    }
    out
}

/// Write the three expression artifacts for a run stem.
pub fn write_expression(dir: &Path, stem: &str, expr: &Expr) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    written.push(write_text(
        dir,
        &format!("{stem}.expr.txt"),
        &format!("{}\n", render(expr, Format::Plain, Some(3))),
    )?);
    written.push(write_text(
        dir,
        &format!("{stem}.expr.tex"),
        &format!("{}\n", render(expr, Format::Latex, Some(3))),
    )?);
    written.push(write_json(dir, &format!("{stem}.expr.json"), expr)?);
    Ok(written)
}

/// Per-seed summary block reused by fit metrics and sweeps.
#[derive(Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub active_params: usize,
}

pub fn seed_summaries(runs: &[RunRecord]) -> Vec<SeedSummary> {
    runs.iter()
        .map(|r| SeedSummary {
            seed: r.seed,
            final_train_loss: r.final_train_loss,
            final_val_loss: r.final_val_loss,
            active_params: r.final_active_params,
        })
        .collect()
}
