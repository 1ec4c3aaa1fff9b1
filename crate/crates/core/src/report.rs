//! CSV export and import of control-step rows, and the controller
//! comparison report.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::ClusterSummary;
use crate::error::{ClusterError, ReportError};
use crate::model::{ContainerId, QosClass, WorkerId};

pub const CSV_HEADER: [&str; 10] = [
    "time",
    "worker_id",
    "container_id",
    "model",
    "objective",
    "perf",
    "quality",
    "class",
    "limit",
    "share",
];

/// One container at one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub time: f64,
    pub worker_id: WorkerId,
    pub container_id: ContainerId,
    pub model: String,
    pub objective: f64,
    pub perf: f64,
    pub quality: f64,
    pub class: QosClass,
    pub limit: f64,
    pub share: f64,
}

impl ReportRow {
    fn record(&self) -> [String; 10] {
        [
            format!("{:.4}", self.time),
            self.worker_id.to_string(),
            self.container_id.to_string(),
            self.model.clone(),
            format!("{:.4}", self.objective),
            format!("{:.4}", self.perf),
            format!("{:.4}", self.quality),
            self.class.to_string(),
            format!("{:.4}", self.limit),
            format!("{:.4}", self.share),
        ]
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes rows ordered by `(time, worker_id, container_id)`.
pub fn export_csv<'a, I>(rows: I, path: &Path) -> Result<(), ReportError>
where
    I: IntoIterator<Item = &'a ReportRow>,
{
    let mut rows: Vec<&ReportRow> = rows.into_iter().collect();
    rows.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.worker_id.cmp(&b.worker_id))
            .then(a.container_id.cmp(&b.container_id))
    });
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Vec<ReportRow>, ReportError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(ReportError::Malformed {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| ReportError::Malformed {
            row: i + 1,
            message,
        };
        let num = |k: usize| -> Result<f64, ReportError> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", CSV_HEADER[k])))
        };
        let int = |k: usize| -> Result<u32, ReportError> {
            rec[k]
                .parse::<u32>()
                .map_err(|e| bad(format!("{}: {e}", CSV_HEADER[k])))
        };
        rows.push(ReportRow {
            time: num(0)?,
            worker_id: WorkerId(int(1)?),
            container_id: ContainerId(int(2)?),
            model: rec[3].to_string(),
            objective: num(4)?,
            perf: num(5)?,
            quality: num(6)?,
            class: rec[7].parse().map_err(|e| bad(format!("class: {e}")))?,
            limit: num(8)?,
            share: num(9)?,
        });
    }
    Ok(rows)
}

/// Fingerprint of the container roster in a row set: which model, with
/// which objective, sits on which worker.
pub fn roster_fingerprint(rows: &[ReportRow]) -> String {
    let roster: BTreeMap<ContainerId, (WorkerId, &str, String)> = rows
        .iter()
        .map(|r| {
            (
                r.container_id,
                (r.worker_id, r.model.as_str(), format!("{:.4}", r.objective)),
            )
        })
        .collect();
    let mut hasher = Sha256::new();
    for (id, (w, model, objective)) in roster {
        hasher.update(format!("{id},{w},{model},{objective}\n"));
    }
    hex::encode(hasher.finalize())
}

/// Rebuilds a summary from exported rows.
pub fn summary_from_rows(
    rows: &[ReportRow],
    fingerprint: impl Into<String>,
) -> Result<ClusterSummary, ClusterError> {
    let mut groups: BTreeMap<(WorkerId, u64), (f64, Vec<ReportRow>)> = BTreeMap::new();
    for r in rows {
        // time is non-negative, so its bit pattern orders like the value
        groups
            .entry((r.worker_id, r.time.to_bits()))
            .or_insert_with(|| (r.time, Vec::new()))
            .1
            .push(r.clone());
    }
    let mut summary = ClusterSummary::new(fingerprint);
    for ((worker, _), (time, rows)) in groups {
        summary.collect_rows(worker, time, &rows)?;
    }
    Ok(summary)
}

/// Ratio of satisfied counts. Without baseline successes no finite ratio
/// exists, so the lower bound `>= N` is reported instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ratio {
    Finite(f64),
    AtLeast(usize),
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(r) => write!(f, "{r:.2}"),
            Ratio::AtLeast(n) => write!(f, ">= {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerComparison {
    pub worker_id: WorkerId,
    pub satisfied: usize,
    pub baseline_satisfied: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub workers: Vec<WorkerComparison>,
    pub total: usize,
    pub baseline_total: usize,
    pub ratio: Ratio,
    pub abs_quality: f64,
    pub baseline_abs_quality: f64,
}

pub fn compare(
    candidate: &ClusterSummary,
    baseline: &ClusterSummary,
) -> Result<Comparison, ClusterError> {
    if candidate.fingerprint != baseline.fingerprint {
        return Err(ClusterError::FingerprintMismatch {
            left: candidate.fingerprint.clone(),
            right: baseline.fingerprint.clone(),
        });
    }
    let a = candidate.census_all();
    let b = baseline.census_all();
    let mut ids: Vec<WorkerId> = a.keys().chain(b.keys()).copied().collect();
    ids.sort();
    ids.dedup();
    let workers: Vec<WorkerComparison> = ids
        .iter()
        .map(|id| WorkerComparison {
            worker_id: *id,
            satisfied: a.get(id).map_or(0, |c| c.satisfied),
            baseline_satisfied: b.get(id).map_or(0, |c| c.satisfied),
        })
        .collect();
    let total: usize = workers.iter().map(|w| w.satisfied).sum();
    let baseline_total: usize = workers.iter().map(|w| w.baseline_satisfied).sum();
    let ratio = match (total, baseline_total) {
        (0, 0) => Ratio::Finite(1.0),
        (n, 0) => Ratio::AtLeast(n),
        (n, d) => Ratio::Finite(n as f64 / d as f64),
    };
    Ok(Comparison {
        workers,
        total,
        baseline_total,
        ratio,
        abs_quality: a.values().map(|c| c.abs_quality).sum(),
        baseline_abs_quality: b.values().map(|c| c.abs_quality).sum(),
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "worker  satisfied  baseline")?;
        for w in &self.workers {
            writeln!(
                f,
                "{:>6}  {:>9}  {:>8}",
                w.worker_id, w.satisfied, w.baseline_satisfied
            )?;
        }
        writeln!(f, " total  {:>9}  {:>8}", self.total, self.baseline_total)?;
        writeln!(f, "ratio: {}", self.ratio)?;
        write!(
            f,
            "sum |q|: {:.2} vs {:.2} (baseline)",
            self.abs_quality, self.baseline_abs_quality
        )
    }
}

/// Sidecar written next to an exported CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub fingerprint: String,
    pub controller: crate::worker::ControllerKind,
    pub satisfied: BTreeMap<WorkerId, usize>,
    pub total_satisfied: usize,
}

pub fn write_summary_file(summary: &SummaryFile, path: &Path) -> Result<(), ReportError> {
    let mut file = File::create(path).map_err(io_err(path))?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    file.write_all(json.as_bytes()).map_err(io_err(path))?;
    file.write_all(b"\n").map_err(io_err(path))?;
    Ok(())
}

/// Loads a CSV and its summary, taking the fingerprint from a sibling
/// `summary.json` when one exists.
pub fn load_summary(csv_path: &Path) -> Result<ClusterSummary, ReportError> {
    let rows = load_csv(csv_path)?;
    let sidecar = csv_path.with_file_name("summary.json");
    let fingerprint = match std::fs::read_to_string(&sidecar) {
        Ok(text) => match serde_json::from_str::<SummaryFile>(&text) {
            Ok(s) => s.fingerprint,
            Err(e) => {
                return Err(ReportError::Malformed {
                    row: 0,
                    message: format!("{}: {e}", sidecar.display()),
                })
            }
        },
        Err(_) => roster_fingerprint(&rows),
    };
    Ok(summary_from_rows(&rows, fingerprint)?)
}
