//! CSV and manifest writers.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::experiment::{RunOutput, SweepRow};
use crate::error::{Error, Result};

pub const RUN_FILES: [&str; 5] = [
    "load_ratios.csv",
    "slice_metrics.csv",
    "handovers.csv",
    "fct.csv",
    "manifest.toml",
];

#[derive(Serialize)]
struct Manifest<'a> {
    scheme: &'a str,
    seed: u64,
    config_hash: &'a str,
    invocations: u32,
    ues: usize,
    handovers_static: u32,
    handovers_mobile: u32,
    generator: String,
}

#[derive(Serialize)]
struct FctRow {
    ue: u32,
    slice: u32,
    seq: u32,
    size_bytes: f64,
    arrival_ms: f64,
    completion_ms: Option<f64>,
    fct_ms: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes the four metric CSVs and the manifest of one run into `dir`.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = &output.metrics;
    write_csv(&dir.join("load_ratios.csv"), &m.load_samples)?;
    write_csv(&dir.join("slice_metrics.csv"), &m.slices)?;
    write_csv(&dir.join("handovers.csv"), &m.ues)?;
    write_csv(
        &dir.join("fct.csv"),
        m.flows.iter().map(|f| FctRow {
            ue: f.ue.0,
            slice: f.slice.0,
            seq: f.seq,
            size_bytes: f.size_bytes,
            arrival_ms: f.arrival_ms,
            completion_ms: f.completion_ms,
            fct_ms: f.fct_ms(),
        }),
    )?;
    // csv writes no header for an empty sequence; keep every file parseable
    ensure_header(
        &dir.join("load_ratios.csv"),
        "invocation,time_ms,cell,tnd_rbs,capacity_rbs,load_ratio",
    )?;
    ensure_header(
        &dir.join("fct.csv"),
        "ue,slice,seq,size_bytes,arrival_ms,completion_ms,fct_ms",
    )?;
    let manifest = Manifest {
        scheme: output.scheme.name(),
        seed: output.seed,
        config_hash: &output.config_hash,
        invocations: m.invocations,
        ues: m.ues.len(),
        handovers_static: m.handovers(false),
        handovers_mobile: m.handovers(true),
        generator: format!("slicelb {}", env!("CARGO_PKG_VERSION")),
    };
    let path = dir.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest)?).map_err(|e| Error::io(&path, e))
}

fn ensure_header(path: &Path, header: &str) -> Result<()> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.len() == 0 {
        fs::write(path, format!("{header}\n")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn write_sweep_summary(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Copy of the config used, next to the results.
pub fn write_config(dir: &Path, config: &ScenarioConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("config.toml");
    fs::write(&path, config.to_toml_string()?).map_err(|e| Error::io(&path, e))
}
