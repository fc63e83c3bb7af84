use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use apmode_core::modeselect::Algorithm;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{AssignmentRecord, ResultRecord, TrialStatus};

pub const RESULTS_HEADER: &str = "# apmode-results v1";
pub const TIMING_HEADER: &str = "# apmode-timing v1";
pub const SNAPSHOT_FORMAT: &str = "apmode-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("expected a {expected} file, found {found:?}")]
    Header { expected: &'static str, found: String },
    #[error("snapshot holds {found} data, expected {expected}")]
    Kind { expected: String, found: String },
}

#[derive(Serialize, Deserialize)]
struct ResultRow {
    trial: usize,
    seed: u64,
    algorithm: Algorithm,
    k: usize,
    target_x: f64,
    target_y: f64,
    eta: f64,
    gamma_c_db: f64,
    n_tx: usize,
    n_rx: usize,
    total: usize,
    feasible: bool,
    status: TrialStatus,
    iterations: usize,
    restarts: usize,
    converged: bool,
}

#[derive(Serialize)]
struct TimingRow {
    trial: usize,
    seed: u64,
    algorithm: Algorithm,
    k: usize,
    eta: f64,
    runtime_s: f64,
}

/// `results.csv` → `results.<suffix>`.
pub fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

/// Deterministic part of the records: everything except wall-clock time.
pub fn write_results<W: Write>(mut w: W, records: &[ResultRecord]) -> Result<(), IoError> {
    writeln!(w, "{RESULTS_HEADER}")?;
    let mut csv = csv::Writer::from_writer(w);
    for r in records {
        csv.serialize(ResultRow {
            trial: r.trial,
            seed: r.seed,
            algorithm: r.algorithm,
            k: r.k,
            target_x: r.target[0],
            target_y: r.target[1],
            eta: r.eta,
            gamma_c_db: r.gamma_c_db,
            n_tx: r.n_tx,
            n_rx: r.n_rx,
            total: r.total,
            feasible: r.feasible,
            status: r.status,
            iterations: r.iterations,
            restarts: r.restarts,
            converged: r.converged,
        })?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a results file back; `runtime_s` is zero since timing lives in the
/// sidecar.
pub fn read_results<R: BufRead>(mut r: R) -> Result<Vec<ResultRecord>, IoError> {
    let mut first = String::new();
    r.read_line(&mut first)?;
    if first.trim_end() != RESULTS_HEADER {
        return Err(IoError::Header { expected: RESULTS_HEADER, found: first.trim_end().to_string() });
    }
    let mut csv = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in csv.deserialize() {
        let row: ResultRow = row?;
        out.push(ResultRecord {
            trial: row.trial,
            seed: row.seed,
            algorithm: row.algorithm,
            k: row.k,
            target: [row.target_x, row.target_y],
            eta: row.eta,
            gamma_c_db: row.gamma_c_db,
            n_tx: row.n_tx,
            n_rx: row.n_rx,
            total: row.total,
            feasible: row.feasible,
            status: row.status,
            iterations: row.iterations,
            restarts: row.restarts,
            converged: row.converged,
            runtime_s: 0.0,
        });
    }
    Ok(out)
}

pub fn write_timing<W: Write>(mut w: W, records: &[ResultRecord]) -> Result<(), IoError> {
    writeln!(w, "{TIMING_HEADER}")?;
    let mut csv = csv::Writer::from_writer(w);
    for r in records {
        csv.serialize(TimingRow {
            trial: r.trial,
            seed: r.seed,
            algorithm: r.algorithm,
            k: r.k,
            eta: r.eta,
            runtime_s: r.runtime_s,
        })?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_assignments<W: Write>(mut w: W, records: &[AssignmentRecord]) -> Result<(), IoError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|source| IoError::Json { line: 0, source })?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_assignments<R: BufRead>(r: R) -> Result<Vec<AssignmentRecord>, IoError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| IoError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Snapshot<T> {
    format: String,
    version: u32,
    kind: String,
    data: T,
}

/// Versioned JSON wrapper around any serializable value, e.g. channel
/// statistics or sensing geometry.
pub fn write_snapshot<W: Write, T: Serialize>(mut w: W, kind: &str, data: &T) -> Result<(), IoError> {
    let snap = Snapshot { format: SNAPSHOT_FORMAT.to_string(), version: SNAPSHOT_VERSION, kind: kind.to_string(), data };
    serde_json::to_writer_pretty(&mut w, &snap).map_err(|source| IoError::Json { line: 0, source })?;
    writeln!(w)?;
    Ok(())
}

pub fn read_snapshot<R: BufRead, T: DeserializeOwned>(r: R, kind: &str) -> Result<T, IoError> {
    let snap: Snapshot<serde_json::Value> = serde_json::from_reader(r).map_err(|source| IoError::Json { line: 0, source })?;
    if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
        return Err(IoError::Header {
            expected: "apmode-snapshot v1",
            found: format!("{} v{}", snap.format, snap.version),
        });
    }
    if snap.kind != kind {
        return Err(IoError::Kind { expected: kind.to_string(), found: snap.kind });
    }
    serde_json::from_value(snap.data).map_err(|source| IoError::Json { line: 0, source })
}
