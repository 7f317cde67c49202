//! Plot-ready files for a [`ComparisonReport`].
//!
//! * `<strategy>.csv`: `t,S,I,R,u,phase`, one row per policy query.
//! * `<strategy>_envelope.csv`: estimates and envelope bounds per query
//!   (estimating strategies only).
//! * `summary.json`: a [`ReportSummary`].
//!
//! Floats use Rust's shortest round-trip formatting, so re-reading a file
//! recovers the exact values written.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{ComparisonReport, StrategyKind, StrategyOutcome};
use crate::policy::PolicyPhase;

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "S", "I", "R", "u", "phase"];
pub const SUMMARY_FILE: &str = "summary.json";

/// One row of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub u: f64,
    pub phase: PolicyPhase,
}

pub fn trajectory_rows(outcome: &StrategyOutcome) -> Vec<TrajectoryRow> {
    outcome
        .record
        .query_samples()
        .map(|(t, st, u, phase)| TrajectoryRow {
            t,
            s: st.s,
            i: st.i,
            r: st.r,
            u,
            phase,
        })
        .collect()
}

pub fn trajectory_path(dir: &Path, kind: StrategyKind) -> PathBuf {
    dir.join(format!("{kind}.csv"))
}

pub fn envelope_path(dir: &Path, kind: StrategyKind) -> PathBuf {
    dir.join(format!("{kind}_envelope.csv"))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

fn write_trajectory(path: &Path, outcome: &StrategyOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TRAJECTORY_HEADER).map_err(|e| csv_err(path, e))?;
    for row in trajectory_rows(outcome) {
        let fields = [
            row.t.to_string(),
            row.s.to_string(),
            row.i.to_string(),
            row.r.to_string(),
            row.u.to_string(),
            row.phase.as_str().to_string(),
        ];
        w.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_envelope(path: &Path, outcome: &StrategyOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "t", "beta_hat", "gamma_hat", "beta_lo", "beta_hi", "gamma_lo", "gamma_hi", "S_lo", "S_hi", "I_lo",
        "I_hi",
    ])
    .map_err(|e| csv_err(path, e))?;
    for (slice, est) in outcome.envelope.slices.iter().zip(&outcome.estimates) {
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        let fields = [
            slice.time.to_string(),
            opt(est.map(|e| e.beta_hat)),
            opt(est.map(|e| e.gamma_hat)),
            slice.beta.low.to_string(),
            slice.beta.high.to_string(),
            slice.gamma.low.to_string(),
            slice.gamma.high.to_string(),
            slice.s.low.to_string(),
            slice.s.high.to_string(),
            slice.i.low.to_string(),
            slice.i.high.to_string(),
        ];
        w.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write every trajectory, envelope and the summary into `out_dir`
/// (created if missing; existing files are overwritten). Returns the paths written.
pub fn export(report: &ComparisonReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for o in &report.outcomes {
        let path = trajectory_path(dir, o.kind);
        write_trajectory(&path, o)?;
        written.push(path);
        if matches!(o.kind, StrategyKind::Naive | StrategyKind::Robust) {
            let path = envelope_path(dir, o.kind);
            write_envelope(&path, o)?;
            written.push(path);
        }
    }
    let path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&report.summary()).expect("summary serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Read a trajectory file written by [`export`].
pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRow>> {
    let path = path.as_ref();
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        message: msg,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: column {}: {e}", n + 1, TRAJECTORY_HEADER[k])))
        };
        let phase = PolicyPhase::parse(&rec[5]).ok_or_else(|| bad(format!("row {}: bad phase {:?}", n + 1, &rec[5])))?;
        rows.push(TrajectoryRow {
            t: num(0)?,
            s: num(1)?,
            i: num(2)?,
            r: num(3)?,
            u: num(4)?,
            phase,
        });
    }
    Ok(rows)
}

/// Read back `summary.json`.
pub fn read_summary(path: impl AsRef<Path>) -> Result<crate::harness::ReportSummary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
