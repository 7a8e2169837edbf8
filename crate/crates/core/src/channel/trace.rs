//! Wideband CQI traces and their binding to UEs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::UeId;

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct CqiSample {
    pub t_ms: f64,
    pub cqi: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CqiTrace {
    pub id: u32,
    pub samples: Vec<CqiSample>,
    pub mean_rsrp_dbm: f64,
}

impl CqiTrace {
    pub fn new(id: u32, samples: Vec<CqiSample>, mean_rsrp_dbm: f64) -> std::result::Result<Self, String> {
        if samples.is_empty() {
            return Err("trace has no samples".into());
        }
        if let Some(w) = samples.windows(2).find(|w| !(w[1].t_ms > w[0].t_ms)) {
            return Err(format!("timestamps not strictly increasing at t={}", w[1].t_ms));
        }
        if let Some(s) = samples.iter().find(|s| !(1..=15).contains(&s.cqi)) {
            return Err(format!("cqi {} at t={} outside 1..=15", s.cqi, s.t_ms));
        }
        if !mean_rsrp_dbm.is_finite() {
            return Err("mean RSRP is not finite".into());
        }
        Ok(CqiTrace {
            id,
            samples,
            mean_rsrp_dbm,
        })
    }

    /// Length after which the trace repeats. The last sample is held for
    /// one average sample spacing before wrapping.
    pub fn period_ms(&self) -> f64 {
        let n = self.samples.len();
        let first = self.samples[0].t_ms;
        let last = self.samples[n - 1].t_ms;
        let gap = if n > 1 { (last - first) / (n - 1) as f64 } else { 1.0 };
        last - first + gap
    }

    /// Sample-and-hold lookup, wrapping around at the end of the trace.
    pub fn cqi_at(&self, t_ms: f64) -> u8 {
        let first = self.samples[0].t_ms;
        let t = first + (t_ms - first).rem_euclid(self.period_ms());
        let idx = self.samples.partition_point(|s| s.t_ms <= t);
        self.samples[idx.saturating_sub(1)].cqi
    }
}

/// Reads a `t_ms,cqi` CSV file.
pub fn read_trace_csv(path: &Path) -> Result<Vec<CqiSample>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Trace {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).ne(["t_ms", "cqi"]) {
        return Err(Error::Trace {
            path: path.to_path_buf(),
            reason: format!(
                "expected header `t_ms,cqi`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e: csv::Error| Error::Trace {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct TraceEntry {
    pub trace_id: u32,
    pub path: PathBuf,
    pub mean_rsrp_dbm: f64,
}

#[derive(Deserialize)]
struct Manifest {
    #[serde(default)]
    trace: Vec<TraceEntry>,
}

/// Loads every trace listed in a TOML manifest of `[[trace]]` tables.
/// Relative paths resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<CqiTrace>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = toml::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut traces = manifest
        .trace
        .into_iter()
        .map(|entry| {
            let file = base.join(&entry.path);
            let samples = read_trace_csv(&file)?;
            CqiTrace::new(entry.trace_id, samples, entry.mean_rsrp_dbm)
                .map_err(|reason| Error::Trace { path: file, reason })
        })
        .collect::<Result<Vec<_>>>()?;
    if traces.is_empty() {
        return Err(Error::EmptyTraceSet);
    }
    traces.sort_by_key(|t| t.id);
    Ok(traces)
}

/// Assigns every UE the trace whose mean RSRP is closest to the UE's
/// modeled RSRP; equal distances go to the lower trace id.
pub fn bind_traces(modeled_rsrp: &[(UeId, f64)], traces: &[CqiTrace]) -> Result<BTreeMap<UeId, u32>> {
    if traces.is_empty() {
        return Err(Error::EmptyTraceSet);
    }
    Ok(modeled_rsrp
        .iter()
        .map(|&(ue, r)| {
            let best = traces
                .iter()
                .min_by(|a, b| {
                    let da = (a.mean_rsrp_dbm - r).abs();
                    let db = (b.mean_rsrp_dbm - r).abs();
                    da.total_cmp(&db).then(a.id.cmp(&b.id))
                })
                .expect("non-empty");
            (ue, best.id)
        })
        .collect())
}
