use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Method, RunSpec};
use crate::baselines::{exhaustive, ga_run, random_search};
use crate::error::{Error, Result};
use crate::trainer::{BestDesign, EpisodeReport, TrainStatus, Trainer};

/// One evaluated sample in `history.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub episode: usize,
    pub sample_index: usize,
    pub reward: f64,
    pub valid: bool,
    pub violation_sum: f64,
    pub running_reward: f64,
    pub best_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub workload: String,
    pub platform: String,
    pub objective: String,
    pub seed: u64,
    pub status: String,
    pub evaluations: usize,
    /// Lowest objective over designs that met every constraint.
    pub best_objective: Option<f64>,
    pub log10_best_objective: Option<f64>,
    pub best_reward: Option<f64>,
    /// Evaluations up to and including the one that found the best
    /// objective.
    pub samples_to_best: Option<usize>,
    /// Share of samples the evaluator could score.
    pub valid_rate: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn history_rows(history: &[EpisodeReport]) -> Vec<HistoryRow> {
    history
        .iter()
        .flat_map(|r| {
            r.samples.iter().enumerate().map(move |(k, s)| HistoryRow {
                episode: r.episode,
                sample_index: k,
                reward: s.reward,
                valid: s.valid,
                violation_sum: s.violation_sum,
                running_reward: r.running_reward,
                best_reward: r.best_reward,
            })
        })
        .collect()
}

fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["episode", "sample_index", "reward", "valid", "violation_sum", "running_reward", "best_reward"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn samples_before(history: &[EpisodeReport], episode: usize) -> usize {
    history.iter().take_while(|r| r.episode < episode).map(|r| r.samples.len()).sum()
}

fn summarize<D>(spec: &RunSpec, status: &str, history: &[EpisodeReport], best: Option<&BestDesign<D>>, best_feasible: Option<&BestDesign<D>>) -> RunSummary {
    let evaluations: usize = history.iter().map(|r| r.samples.len()).sum();
    let valid = history.iter().flat_map(|r| &r.samples).filter(|s| s.valid).count();
    let best_objective = best_feasible.map(|b| b.objective);
    RunSummary {
        method: spec.method.name().into(),
        workload: spec.workload.display().to_string(),
        platform: spec.platform.clone(),
        objective: format!("{:?}", spec.objective).to_lowercase(),
        seed: spec.seed,
        status: status.into(),
        evaluations,
        best_objective,
        log10_best_objective: best_objective.map(f64::log10),
        best_reward: best.map(|b| b.reward),
        samples_to_best: best_feasible.map(|b| samples_before(history, b.episode) + b.sample_index + 1),
        valid_rate: if evaluations == 0 { 0.0 } else { valid as f64 / evaluations as f64 },
    }
}

/// Runs one experiment and writes `history.csv`, `summary.json` and
/// `best.json` into the output directory.
pub fn cmd_run(spec: &RunSpec) -> Result<RunSummary> {
    let spec = spec.resolved();
    if spec.method == Method::Oracle {
        return cmd_oracle(&spec, spec.oracle.limit);
    }
    let (_, problem) = spec.problem()?;
    fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;
    log::info!("{} on {} ({} parameters)", spec.method.name(), spec.workload.display(), problem.accel().space().len());

    let (status, history, best, best_feasible) = match spec.method {
        Method::Core | Method::CoreNoShaping | Method::CoreNoScaling => {
            let trainer = Trainer::new(&problem, spec.train.clone())?;
            let out = trainer.run(|r| {
                if r.episode % 50 == 0 {
                    log::info!("episode {} running {:.4e} best {:?}", r.episode, r.running_reward, r.best_feasible_objective);
                }
            })?;
            let status = match out.status {
                TrainStatus::Completed => "completed",
                TrainStatus::TargetReached => "target-reached",
                TrainStatus::NoSamples => "no-samples",
            };
            (status, out.history, out.best, out.best_feasible)
        }
        Method::Ga => {
            let out = ga_run(&problem, &spec.ga, &spec.train.reward, spec.seed, spec.workers)?;
            ("completed", out.history, out.best, out.best_feasible)
        }
        Method::Random => {
            let out = random_search(&problem, spec.random_budget, &spec.train.reward, spec.seed, spec.workers)?;
            ("completed", out.history, out.best, out.best_feasible)
        }
        Method::Oracle => unreachable!(),
    };

    write_history(&spec.out.join("history.csv"), &history_rows(&history))?;
    let summary = summarize(&spec, status, &history, best.as_ref(), best_feasible.as_ref());
    write_json(&spec.out.join("summary.json"), &summary)?;
    write_json(&spec.out.join("best.json"), &best_feasible)?;
    Ok(summary)
}

#[derive(Serialize)]
struct OracleBest<'a, D> {
    design: &'a D,
    objective: f64,
}

/// Enumerates the whole space and writes `oracle.csv`, `summary.json` and
/// `best.json`.
pub fn cmd_oracle(spec: &RunSpec, limit: u128) -> Result<RunSummary> {
    let spec = RunSpec {
        method: Method::Oracle,
        ..spec.resolved()
    };
    let (_, problem) = spec.problem()?;
    let out = exhaustive(&problem, limit, spec.workers)?;
    fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;

    let path = spec.out.join("oracle.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["index", "objective", "feasible"])?;
    for r in &out.rows {
        w.write_record([r.index.to_string(), r.objective.map(|o| o.to_string()).unwrap_or_default(), r.feasible.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let best_objective = out.best.as_ref().map(|b| b.1);
    let samples_to_best = best_objective.and_then(|b| out.rows.iter().position(|r| r.feasible && r.objective == Some(b)).map(|i| i + 1));
    let summary = RunSummary {
        method: Method::Oracle.name().into(),
        workload: spec.workload.display().to_string(),
        platform: spec.platform.clone(),
        objective: format!("{:?}", spec.objective).to_lowercase(),
        seed: spec.seed,
        status: "completed".into(),
        evaluations: out.evaluated,
        best_objective,
        log10_best_objective: best_objective.map(f64::log10),
        best_reward: best_objective.map(|o| -o),
        samples_to_best,
        valid_rate: out.rows.iter().filter(|r| r.objective.is_some()).count() as f64 / out.evaluated.max(1) as f64,
    };
    write_json(&spec.out.join("summary.json"), &summary)?;
    let best = out.best.as_ref().map(|(d, o)| OracleBest { design: d, objective: *o });
    write_json(&spec.out.join("best.json"), &best)?;
    Ok(summary)
}
