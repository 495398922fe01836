//! File formats: graph JSON, trajectory CSV, trial and trace JSONL, and
//! fit tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use cascade_core::calibration::FitResult;
use cascade_core::dynamics::Trajectory;
use cascade_core::governance::TraceRecord;
use cascade_core::graph::{DirectedGraph, SpectralSummary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    for r in rows {
        w.serialize(r).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(HarnessError::io(path))?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(HarnessError::json(path))?;
        w.write_all(b"\n").map_err(HarnessError::io(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Parses every nonblank line; unparseable lines are returned as errors so
/// callers can skip and count them.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<Result<T, serde_json::Error>>> {
    let f = File::open(path).map_err(HarnessError::io(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(HarnessError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line));
    }
    Ok(out)
}

pub fn read_trace_log(path: &Path) -> Result<Vec<Result<TraceRecord, serde_json::Error>>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub n: usize,
    pub kind: String,
    pub seed: Option<u64>,
    /// `"j->i"`: agent `j` sends to agent `i`.
    pub edges: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralSummary>,
}

impl GraphDoc {
    pub fn new(g: &DirectedGraph, spectral: Option<SpectralSummary>) -> Self {
        Self {
            n: g.n(),
            kind: g.kind().to_string(),
            seed: g.seed(),
            edges: g.edges().iter().map(ToString::to_string).collect(),
            spectral,
        }
    }
}

pub fn write_graph_json(path: &Path, doc: &GraphDoc) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).map_err(HarnessError::json(path))?;
    crate::report::write_text(path, &(text + "\n"))
}

/// Columns `t, S, s_0, ..., s_{n-1}`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    let n = traj.states.first().map_or(0, |s| s.s.len());
    let mut header = vec!["t".to_string(), "S".to_string()];
    header.extend((0..n).map(|i| format!("s_{i}")));
    w.write_record(&header).map_err(HarnessError::csv(path))?;
    for (t, (state, cov)) in traj.states.iter().zip(&traj.coverage).enumerate() {
        let mut row = vec![t.to_string(), cov.to_string()];
        row.extend(state.s.iter().map(ToString::to_string));
        w.write_record(&row).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// One JSON object per line holding the fit and its topology label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub topology: String,
    #[serde(flatten)]
    pub fit: FitResult,
}

pub fn write_fit_records(path: &Path, records: &[FitRecord]) -> Result<()> {
    write_jsonl(path, records)
}
