//! Metric traces and their CSV / JSON forms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plgame::Constants;
use crate::solvers::CatalystTrace;

use super::config::ExperimentConfig;
use super::experiment::ResolvedSchedule;

pub const CSV_HEADER: [&str; 7] = ["sfo", "iter", "grad_norm", "primal_gap", "dist_saddle", "lyapunov", "wall_ns"];

/// Version tag written into every JSON trace.
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One metric snapshot. Metrics are evaluated without billing the solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sfo: u64,
    pub iter: u64,
    /// `‖∇f(x, y)‖` of the full gradient.
    pub grad_norm: f64,
    pub primal_gap: Option<f64>,
    /// Euclidean distance to the reference saddle point.
    pub dist_saddle: Option<f64>,
    pub lyapunov: Option<f64>,
    pub wall_ns: u64,
}

/// Metric columns that can be plotted or compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    GradNorm,
    PrimalGap,
    DistSaddle,
    Lyapunov,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::GradNorm => "grad_norm",
            Metric::PrimalGap => "primal_gap",
            Metric::DistSaddle => "dist_saddle",
            Metric::Lyapunov => "lyapunov",
        }
    }

    pub fn of(self, r: &TraceRecord) -> Option<f64> {
        match self {
            Metric::GradNorm => Some(r.grad_norm),
            Metric::PrimalGap => r.primal_gap,
            Metric::DistSaddle => r.dist_saddle,
            Metric::Lyapunov => r.lyapunov,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grad_norm" => Ok(Metric::GradNorm),
            "primal_gap" => Ok(Metric::PrimalGap),
            "dist_saddle" => Ok(Metric::DistSaddle),
            "lyapunov" => Ok(Metric::Lyapunov),
            other => Err(Error::Config(format!(
                "unknown metric `{other}` (expected grad_norm, primal_gap, dist_saddle or lyapunov)"
            ))),
        }
    }
}

/// Metrics at the point the solver returned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputMetrics {
    pub grad_norm: f64,
    pub primal_gap: Option<f64>,
    pub dist_saddle: Option<f64>,
    /// `‖∇g(x)‖` where the primal function is available.
    pub primal_grad_norm: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub algorithm: String,
    /// SFO billed per parameter update, excluding refreshes.
    pub sfo_per_step: String,
    pub iterations: u64,
    pub sfo: u64,
    pub full_grad_evals: u64,
    pub stopped_early: bool,
    /// Error that aborted the solver, if any.
    pub aborted: Option<String>,
    pub output: Option<OutputMetrics>,
    pub catalyst: Option<CatalystTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub version: String,
    pub config: ExperimentConfig,
    pub constants: Option<Constants>,
    pub schedule: Option<ResolvedSchedule>,
    pub metadata: RunMetadata,
    pub warnings: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn aborted(&self) -> bool {
        self.metadata.aborted.is_some()
    }

    /// Whether any record carries `metric`.
    pub fn has_metric(&self, metric: Metric) -> bool {
        records_have(&self.records, metric)
    }
}

pub(crate) fn records_have(records: &[TraceRecord], metric: Metric) -> bool {
    records.iter().any(|r| metric.of(r).is_some())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes the fixed 7-column CSV; absent metrics are empty fields.
pub fn write_csv(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv { path: path.to_path_buf(), source: e };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.sfo.to_string(),
            r.iter.to_string(),
            fmt_f64(r.grad_norm),
            fmt_opt(r.primal_gap),
            fmt_opt(r.dist_saddle),
            fmt_opt(r.lyapunov),
            r.wall_ns.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_csv`]; the header must match exactly.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv { path: path.to_path_buf(), source: e };
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config(format!(
            "{}: unexpected header `{}`",
            path.display(),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let bad = |line: usize, what: &str| Error::Config(format!("{}: row {line}: bad {what}", path.display()));
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let int = |j: usize| row[j].parse::<u64>().map_err(|_| bad(i + 1, CSV_HEADER[j]));
        let opt = |j: usize| -> Result<Option<f64>> {
            if row[j].is_empty() {
                Ok(None)
            } else {
                row[j].parse::<f64>().map(Some).map_err(|_| bad(i + 1, CSV_HEADER[j]))
            }
        };
        out.push(TraceRecord {
            sfo: int(0)?,
            iter: int(1)?,
            grad_norm: opt(2)?.ok_or_else(|| bad(i + 1, "grad_norm"))?,
            primal_gap: opt(3)?,
            dist_saddle: opt(4)?,
            lyapunov: opt(5)?,
            wall_ns: int(6)?,
        });
    }
    Ok(out)
}

pub fn write_json(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(trace).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
}
