use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HistoryRow, RunSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub method: String,
    pub seed: u64,
    pub evaluations: usize,
    pub best_objective: Option<f64>,
    pub log10_best_objective: Option<f64>,
    pub samples_to_best: Option<usize>,
}

#[derive(Debug, Serialize)]
struct CurvePoint<'a> {
    run: &'a str,
    evaluations: usize,
    best_reward: Option<f64>,
}

fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_history(dir: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(dir.join("history.csv"))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Builds the comparison table, sorted by best objective. Directories that
/// cannot be read are reported as warnings and left out.
pub fn cmd_report(dirs: &[PathBuf], out: Option<&Path>) -> Result<(Vec<ReportRow>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut curves: Vec<(String, Vec<HistoryRow>)> = Vec::new();
    for dir in dirs {
        let run = dir.display().to_string();
        match read_summary(dir) {
            Ok(s) => rows.push(ReportRow {
                run: run.clone(),
                method: s.method,
                seed: s.seed,
                evaluations: s.evaluations,
                best_objective: s.best_objective,
                log10_best_objective: s.log10_best_objective,
                samples_to_best: s.samples_to_best,
            }),
            Err(e) => {
                warnings.push(format!("skipping {run}: {e}"));
                continue;
            }
        }
        if dir.join("history.csv").exists() {
            match read_history(dir) {
                Ok(h) => curves.push((run, h)),
                Err(e) => warnings.push(format!("no curve for {run}: {e}")),
            }
        }
    }
    rows.sort_by(|a, b| {
        let key = |r: &ReportRow| r.best_objective.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then_with(|| a.run.cmp(&b.run))
    });

    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut w = csv::Writer::from_path(out.join("report.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(out, e))?;
        let mut w = csv::Writer::from_path(out.join("curves.csv"))?;
        for (run, history) in &curves {
            for (i, h) in history.iter().enumerate() {
                w.serialize(CurvePoint {
                    run,
                    evaluations: i + 1,
                    best_reward: h.best_reward,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io(out, e))?;
    }
    Ok((rows, warnings))
}

pub fn format_table(rows: &[ReportRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
    let mut s = format!("{:<16} {:>6} {:>10} {:>14} {:>10} {:>10}  run\n", "method", "seed", "evals", "best", "log10", "to_best");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>10} {:>14} {:>10} {:>10}  {}",
            r.method,
            r.seed,
            r.evaluations,
            opt(r.best_objective),
            r.log10_best_objective.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()),
            r.samples_to_best.map(|x| x.to_string()).unwrap_or_else(|| "-".into()),
            r.run
        );
    }
    s
}
