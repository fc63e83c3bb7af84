use std::fmt::Write as _;

use apmode_core::modeselect::Algorithm;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::ResultRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SummaryError {
    #[error("no records to summarize")]
    EmptyInput,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

/// Aggregates for one (algorithm, UE count, threshold, target) group. Mode
/// counts cover feasible records only; runtime covers all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub eta: f64,
    pub target: [f64; 2],
    pub records: usize,
    pub feasible: usize,
    pub feasibility_rate: f64,
    pub n_tx: Option<Moments>,
    pub n_rx: Option<Moments>,
    pub total: Option<Moments>,
    pub runtime_s: Moments,
}

fn same_group(a: &ResultRecord, b: &ResultRecord) -> bool {
    a.algorithm == b.algorithm
        && a.k == b.k
        && a.eta.to_bits() == b.eta.to_bits()
        && a.target[0].to_bits() == b.target[0].to_bits()
        && a.target[1].to_bits() == b.target[1].to_bits()
}

/// Groups in order of first appearance.
pub fn summarize(records: &[ResultRecord]) -> Result<Vec<SummaryRow>, SummaryError> {
    if records.is_empty() {
        return Err(SummaryError::EmptyInput);
    }
    let mut heads: Vec<&ResultRecord> = Vec::new();
    for r in records {
        if !heads.iter().any(|h| same_group(h, r)) {
            heads.push(r);
        }
    }
    let rows = heads
        .into_iter()
        .map(|h| {
            let group: Vec<&ResultRecord> = records.iter().filter(|r| same_group(h, r)).collect();
            let ok: Vec<&&ResultRecord> = group.iter().filter(|r| r.feasible).collect();
            SummaryRow {
                algorithm: h.algorithm,
                k: h.k,
                eta: h.eta,
                target: h.target,
                records: group.len(),
                feasible: ok.len(),
                feasibility_rate: ok.len() as f64 / group.len() as f64,
                n_tx: Moments::of(ok.iter().map(|r| r.n_tx as f64)),
                n_rx: Moments::of(ok.iter().map(|r| r.n_rx as f64)),
                total: Moments::of(ok.iter().map(|r| r.total as f64)),
                runtime_s: Moments::of(group.iter().map(|r| r.runtime_s)).unwrap_or(Moments { mean: 0.0, std: 0.0 }),
            }
        })
        .collect();
    Ok(rows)
}

fn cell(m: Option<Moments>) -> String {
    m.map_or_else(|| "-".to_string(), |m| format!("{:.2}±{:.2}", m.mean, m.std))
}

/// Fixed-width text table of the summary.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>3} {:>11} {:>7} {:>12} {:>12} {:>12} {:>14}",
        "algorithm", "K", "eta", "feas", "tx", "rx", "total", "runtime_s"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>3} {:>11.4e} {:>7.3} {:>12} {:>12} {:>12} {:>14}",
            r.algorithm.name(),
            r.k,
            r.eta,
            r.feasibility_rate,
            cell(r.n_tx),
            cell(r.n_rx),
            cell(r.total),
            format!("{:.4}±{:.4}", r.runtime_s.mean, r.runtime_s.std),
        );
    }
    s
}
