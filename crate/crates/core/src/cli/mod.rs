//! Experiment front end: run specs, output files and the comparison report.

mod report;
mod run;

pub use report::{cmd_report, format_table, ReportRow};
pub use run::{cmd_oracle, cmd_run, HistoryRow, RunSummary};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::GaConfig;
use crate::design_space::{AccelSpaceOptions, Workload};
use crate::error::{Error, Result};
use crate::objective::Shaping;
use crate::sim::{AcceleratorProblem, CostConstants, Objective, Platform};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Core,
    /// Violations and anomalies get one fixed penalty.
    CoreNoShaping,
    /// Every parameter decodes from its static range.
    CoreNoScaling,
    Ga,
    Random,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Core => "core",
            Method::CoreNoShaping => "core-no-shaping",
            Method::CoreNoScaling => "core-no-scaling",
            Method::Ga => "ga",
            Method::Random => "random",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub limit: u128,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { limit: 1_000_000 }
    }
}

/// One experiment, read from a JSON document. Relative paths resolve
/// against the directory holding the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub method: Method,
    pub workload: PathBuf,
    pub platform: String,
    /// Overrides the platform's area budget.
    pub area_budget_mm2: Option<f64>,
    pub objective: Objective,
    /// Multiplies the objective weights. Rewards of order one let the
    /// entropy and KL terms matter; `train.reward.alpha_c` should move with it.
    pub reward_scale: f64,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    /// When set, overrides the evaluation budget of every method.
    pub budget: Option<usize>,
    pub space: AccelSpaceOptions,
    pub costs: CostConstants,
    /// The reward weights are derived from `objective`.
    pub train: TrainConfig,
    pub ga: GaConfig,
    pub random_budget: usize,
    pub oracle: OracleConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            method: Method::Core,
            workload: PathBuf::from("workload.txt"),
            platform: "edge".into(),
            area_budget_mm2: None,
            objective: Objective::Latency,
            reward_scale: 1.0,
            seed: 0,
            workers: 1,
            out: PathBuf::from("out"),
            budget: None,
            space: AccelSpaceOptions::default(),
            costs: CostConstants::default(),
            train: TrainConfig::default(),
            ga: GaConfig::default(),
            random_budget: 40_000,
            oracle: OracleConfig::default(),
        }
    }
}

impl RunSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a run config and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if spec.workload.is_relative() {
            spec.workload = base.join(&spec.workload);
        }
        Ok(spec)
    }

    pub fn platform(&self) -> Result<Platform> {
        let mut p = Platform::named(&self.platform)?;
        if let Some(b) = self.area_budget_mm2 {
            p.area_budget_mm2 = b;
        }
        Ok(p)
    }

    /// Folds the top-level overrides and method switches into the module
    /// configs.
    pub fn resolved(&self) -> RunSpec {
        let mut s = self.clone();
        s.train.seed = s.seed;
        s.train.workers = s.workers;
        s.train.reward.weights = s.objective.weights().iter().map(|w| w * s.reward_scale).collect();
        match s.method {
            Method::CoreNoShaping => {
                s.train.reward.shaping = Shaping::Fixed {
                    penalty: s.train.reward.r_ano,
                }
            }
            Method::CoreNoScaling => s.space.scaling = false,
            _ => {}
        }
        if let Some(b) = s.budget {
            s.train.budget = b;
            s.ga.generations = GaConfig::generations_for_budget(s.ga.population, s.ga.elitism, b);
            s.random_budget = b;
        }
        s
    }

    pub fn problem(&self) -> Result<(Workload, AcceleratorProblem)> {
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::Config(format!("reward_scale must be finite and > 0, got {}", self.reward_scale)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if !self.workload.is_file() {
            return Err(Error::Config(format!("workload: file not found: {}", self.workload.display())));
        }
        let workload = Workload::load(&self.workload)?;
        let problem = AcceleratorProblem::new(&workload, &self.space, self.platform()?, self.costs, self.objective)?;
        Ok((workload, problem))
    }
}

/// The fully populated default config as pretty JSON.
pub fn defaults() -> String {
    serde_json::to_string_pretty(&RunSpec::default()).expect("default spec serializes")
}
