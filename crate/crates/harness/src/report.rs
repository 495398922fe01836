use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cascade_core::governance::TraceRecord;
use cascade_core::montecarlo::AggregateSeries;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::export::{write_csv, write_jsonl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: usize,
    pub policy: String,
    pub defense: String,
    pub asr_flag: bool,
    pub consensus_round: Option<usize>,
    pub final_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub t: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactFactor {
    pub hub: usize,
    pub leaf: usize,
    pub hub_mean: f64,
    pub leaf_mean: f64,
    pub hub_stderr: f64,
    pub leaf_stderr: f64,
    /// `hub_mean / leaf_mean`; infinite when the leaf arm never spreads.
    pub ratio: f64,
    pub infinite: bool,
    /// Delta-method standard error of `ratio`.
    pub ratio_stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PollutedRow {
    pub run_id: usize,
    pub intervention_t: usize,
    pub polluted_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub topology: String,
    pub form: String,
    pub beta: f64,
    pub delta: f64,
    pub mse: f64,
    pub final_coverage: f64,
}

/// Result of one experiment arm.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub label: String,
    pub attack_policy: String,
    pub defense: String,
    pub asr: f64,
    pub bicr: f64,
    pub runs: Vec<RunRow>,
    pub coverage_curves: Vec<Vec<f64>>,
    pub coverage: Vec<CoverageRow>,
    pub impact_factor: Option<ImpactFactor>,
    pub polluted_rounds: Option<Vec<PollutedRow>>,
    pub fit_table: Option<Vec<FitRow>>,
    #[serde(skip)]
    pub traces: Vec<Vec<TraceRecord>>,
    pub warnings: Vec<String>,
}

impl Report {
    /// Binomial standard error of `asr` (and of `bicr`).
    pub fn asr_stderr(&self) -> f64 {
        let n = self.runs.len().max(1) as f64;
        (self.asr * (1.0 - self.asr) / n).sqrt()
    }

    pub(crate) fn coverage_rows(agg: &AggregateSeries) -> Vec<CoverageRow> {
        agg.mean
            .iter()
            .zip(&agg.stderr)
            .enumerate()
            .map(|(t, (&mean, &stderr))| CoverageRow { t, mean, stderr })
            .collect()
    }
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

fn write_rows<T: Serialize>(dir: &Path, stem: &str, rows: &[T], format: Format) -> Result<PathBuf> {
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            write_csv(&path, rows)?;
            Ok(path)
        }
        Format::Jsonl => {
            let path = dir.join(format!("{stem}.jsonl"));
            write_jsonl(&path, rows)?;
            Ok(path)
        }
    }
}

/// Writes the per-run summary, the coverage table, per-run trace logs, and
/// any optional tables of `report` under `dir`. Returns the files written.
pub fn emit_report(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    if report.runs.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let stem = file_stem(&report.label);
    let mut written = vec![
        write_rows(dir, &format!("{stem}_runs"), &report.runs, format)?,
        write_rows(dir, &format!("{stem}_coverage"), &report.coverage, Format::Csv)?,
    ];
    if let Some(f) = &report.impact_factor {
        written.push(write_rows(dir, &format!("{stem}_impact"), std::slice::from_ref(f), format)?);
    }
    if let Some(rows) = &report.polluted_rounds {
        written.push(write_rows(dir, &format!("{stem}_polluted"), rows, format)?);
    }
    if let Some(rows) = &report.fit_table {
        written.push(write_rows(dir, &format!("{stem}_fits"), rows, format)?);
    }
    if report.traces.iter().any(|t| !t.is_empty()) {
        let tdir = dir.join(format!("{stem}_traces"));
        fs::create_dir_all(&tdir).map_err(HarnessError::io(&tdir))?;
        for (run, records) in report.traces.iter().enumerate() {
            let path = tdir.join(format!("run_{run:04}.jsonl"));
            write_jsonl(&path, records)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// One-line human summary per report.
pub fn summary_line(report: &Report) -> String {
    format!(
        "{:<28} attack={:<13} defense={:<28} ASR={:.3} BICR={:.3} (+/- {:.3}, {} runs)",
        report.label,
        report.attack_policy,
        report.defense,
        report.asr,
        report.bicr,
        report.asr_stderr(),
        report.runs.len()
    )
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(HarnessError::io(path))?);
    f.write_all(text.as_bytes()).map_err(HarnessError::io(path))?;
    f.flush().map_err(HarnessError::io(path))
}
