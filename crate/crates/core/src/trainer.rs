//! The one-step training loop: sample a batch of compound actions from a
//! single distribution, decode and evaluate them in parallel, shape the
//! rewards and take exactly one gradient-ascent step.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::action::CompoundAction;
use crate::design_space::{ParamValue, ParameterSpace};
use crate::error::{Error, Result};
use crate::objective::{advantages, surrogate_gradient, EvalOutcome, RewardConfig, RewardShaper};
use crate::optim::Adam;
use crate::policy::{ContextState, PolicyConfig, PolicyParams};

/// A search problem: a parameter space, a decoder from actions to designs
/// and a deterministic evaluator.
pub trait DesignProblem: Sync {
    type Design: Clone + Send + Sync + std::fmt::Debug + Serialize + DeserializeOwned;

    fn space(&self) -> &ParameterSpace;
    /// Assembles a design from decoded parameter values.
    fn build(&self, values: &[ParamValue]) -> Result<Self::Design>;
    fn decode(&self, action: &CompoundAction) -> Result<Self::Design> {
        self.build(&self.space().decode(action)?.values)
    }
    fn evaluate(&self, design: &Self::Design) -> EvalOutcome;
    /// Lower-is-better objective for a metric vector.
    fn objective(&self, metrics: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_episodes: usize,
    pub budget: usize,
    /// Stop once the best reward exceeds this.
    pub target_reward: Option<f64>,
    pub learning_rate: f64,
    pub seed: u64,
    pub workers: usize,
    pub policy: PolicyConfig,
    pub reward: RewardConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_episodes: 2000,
            budget: 40_000,
            target_reward: None,
            learning_rate: 1e-5,
            seed: 0,
            workers: 1,
            policy: PolicyConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("train.workers must be >= 1".into()));
        }
        if self.policy.input_width == 0 || self.policy.hidden_width == 0 {
            return Err(Error::Config("train.policy widths must be >= 1".into()));
        }
        self.reward.validate()
    }

    /// Episodes actually run: capped by both `max_episodes` and the budget.
    pub fn episodes(&self) -> usize {
        self.max_episodes.min(self.budget / self.batch_size.max(1))
    }
}

/// `start + (end − start) · t / (t_m − 1)`, or `start` when `t_m ≤ 1`.
pub fn entropy_coefficient(t: usize, t_m: usize, start: f64, end: f64) -> f64 {
    if t_m <= 1 {
        return start;
    }
    start + (end - start) * t as f64 / (t_m - 1) as f64
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for one sample slot of one episode.
pub fn sample_rng(seed: u64, episode: u64, slot: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ episode) ^ slot))
}

/// Builds the evaluation thread pool.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))
}

/// One decoded and evaluated action.
#[derive(Debug, Clone)]
pub struct Evaluated<D> {
    pub design: Option<D>,
    pub outcome: EvalOutcome,
}

fn evaluate_one<P: DesignProblem>(problem: &P, action: &CompoundAction) -> Evaluated<P::Design> {
    let run = catch_unwind(AssertUnwindSafe(|| match problem.decode(action) {
        Ok(d) => {
            let outcome = problem.evaluate(&d);
            Evaluated { design: Some(d), outcome }
        }
        Err(e) => Evaluated {
            design: None,
            outcome: EvalOutcome::Anomalous {
                reason: format!("decode failed: {e}"),
            },
        },
    }));
    run.unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "evaluator panicked".into());
        Evaluated {
            design: None,
            outcome: EvalOutcome::Anomalous { reason: msg },
        }
    })
}

/// Decodes and evaluates every action on `pool`; results keep input order
/// and a panicking evaluation becomes an anomalous outcome.
pub fn evaluate_batch<P: DesignProblem>(problem: &P, actions: &[CompoundAction], pool: &rayon::ThreadPool) -> Vec<Evaluated<P::Design>> {
    pool.install(|| actions.par_iter().map(|a| evaluate_one(problem, a)).collect())
}

/// A design that was the best seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestDesign<D> {
    pub design: D,
    pub reward: f64,
    /// Lower-is-better objective of the raw metrics.
    pub objective: f64,
    pub metrics: Vec<f64>,
    pub feasible: bool,
    pub episode: usize,
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub fingerprint: u64,
    pub reward: f64,
    pub valid: bool,
    pub violation_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    /// 0-based.
    pub episode: usize,
    pub samples: Vec<SampleRecord>,
    pub batch_mean: f64,
    pub running_reward: f64,
    pub best_reward: Option<f64>,
    pub best_feasible_objective: Option<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub wall_secs: f64,
}

/// Everything carried from one episode to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "D: DeserializeOwned"))]
pub struct TrainState<D> {
    pub params: PolicyParams,
    pub adam: Adam,
    pub shaper: RewardShaper,
    pub episode: usize,
    pub evaluations: usize,
    /// Highest shaped reward among scored designs.
    pub best: Option<BestDesign<D>>,
    /// Lowest objective among designs with no violations.
    pub best_feasible: Option<BestDesign<D>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStatus {
    Completed,
    TargetReached,
    NoSamples,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<D> {
    pub status: TrainStatus,
    pub best: Option<BestDesign<D>>,
    pub best_feasible: Option<BestDesign<D>>,
    pub evaluations: usize,
    pub history: Vec<EpisodeReport>,
}

pub struct Trainer<'p, P: DesignProblem> {
    problem: &'p P,
    cfg: TrainConfig,
    state: TrainState<P::Design>,
    s0: ContextState,
    pool: rayon::ThreadPool,
}

impl<'p, P: DesignProblem> Trainer<'p, P> {
    pub fn new(problem: &'p P, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let heads = problem.space().heads();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ 0x5eed));
        let params = PolicyParams::init(&cfg.policy, heads, &mut rng);
        let state = TrainState {
            adam: Adam::new(params.len(), cfg.learning_rate),
            params,
            shaper: RewardShaper::new(cfg.reward.clone())?,
            episode: 0,
            evaluations: 0,
            best: None,
            best_feasible: None,
        };
        Self::resume(problem, cfg, state)
    }

    /// Continues from a saved state at an episode boundary.
    pub fn resume(problem: &'p P, cfg: TrainConfig, state: TrainState<P::Design>) -> Result<Self> {
        cfg.validate()?;
        if state.params.heads() != problem.space().heads() {
            return Err(Error::Checkpoint("policy heads do not match the design space".into()));
        }
        if state.params.input_width() != cfg.policy.input_width {
            return Err(Error::Checkpoint("policy input width does not match the config".into()));
        }
        Ok(Trainer {
            s0: ContextState::ones(cfg.policy.input_width),
            pool: worker_pool(cfg.workers)?,
            problem,
            cfg,
            state,
        })
    }

    pub fn state(&self) -> &TrainState<P::Design> {
        &self.state
    }

    pub fn into_state(self) -> TrainState<P::Design> {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn finished(&self) -> bool {
        self.state.episode >= self.cfg.episodes() || self.target_reached()
    }

    fn target_reached(&self) -> bool {
        match (self.cfg.target_reward, &self.state.best) {
            (Some(target), Some(b)) => b.reward > target,
            _ => false,
        }
    }

    /// Runs one episode and takes one optimizer step.
    pub fn step(&mut self) -> Result<EpisodeReport> {
        let t = self.state.episode;
        self.run_episode(t).map_err(|e| e.at_episode(t))
    }

    fn run_episode(&mut self, t: usize) -> Result<EpisodeReport> {
        let started = Instant::now();
        let e = self.cfg.batch_size;
        let snapshot = self.state.params.forward(&self.s0)?;
        let actions: Vec<CompoundAction> = (0..e)
            .map(|k| snapshot.sample(&mut sample_rng(self.cfg.seed, t as u64, k as u64)))
            .collect();
        let evaluated = evaluate_batch(self.problem, &actions, &self.pool);
        self.state.evaluations += e;

        let outcomes: Vec<EvalOutcome> = evaluated.iter().map(|x| x.outcome.clone()).collect();
        let shaped = self.state.shaper.shape(&outcomes)?;

        for (k, (ev, &reward)) in evaluated.into_iter().zip(&shaped.rewards).enumerate() {
            self.track_best(t, k, ev, reward);
        }

        let running = self.state.shaper.advance(&shaped)?;
        let adv = advantages(&shaped.rewards, running);
        let reward_cfg = &self.state.shaper.cfg;
        let beta_e = entropy_coefficient(t, self.cfg.max_episodes, reward_cfg.beta_e.0, reward_cfg.beta_e.1);
        let (objective, grad) = surrogate_gradient(&self.state.params, &self.s0, &snapshot, &actions, &adv, reward_cfg.beta_r, beta_e)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        self.state.adam.ascend(self.state.params.as_mut_slice(), &grad)?;
        self.state.episode += 1;

        let samples = actions
            .iter()
            .zip(&outcomes)
            .zip(&shaped.rewards)
            .map(|((a, o), &reward)| SampleRecord {
                fingerprint: a.fingerprint(),
                reward,
                valid: !o.is_anomalous(),
                violation_sum: o.violation_sum(),
            })
            .collect();
        Ok(EpisodeReport {
            episode: t,
            samples,
            batch_mean: shaped.rewards.iter().sum::<f64>() / e as f64,
            running_reward: running,
            best_reward: self.state.best.as_ref().map(|b| b.reward),
            best_feasible_objective: self.state.best_feasible.as_ref().map(|b| b.objective),
            objective,
            grad_norm,
            wall_secs: started.elapsed().as_secs_f64(),
        })
    }

    fn track_best(&mut self, episode: usize, sample_index: usize, ev: Evaluated<P::Design>, reward: f64) {
        let (Some(design), EvalOutcome::Scored { metrics, violations }) = (ev.design, ev.outcome) else {
            return;
        };
        let candidate = BestDesign {
            objective: self.problem.objective(&metrics),
            feasible: violations.is_empty(),
            design,
            reward,
            metrics,
            episode,
            sample_index,
        };
        update_best(&mut self.state.best, &mut self.state.best_feasible, candidate);
    }

    /// Runs until the episode cap, the budget or the target reward.
    pub fn run(mut self, mut on_episode: impl FnMut(&EpisodeReport)) -> Result<TrainOutcome<P::Design>> {
        let mut history = Vec::new();
        while !self.finished() {
            let report = self.step()?;
            on_episode(&report);
            history.push(report);
        }
        let status = if self.state.evaluations == 0 {
            TrainStatus::NoSamples
        } else if self.target_reached() {
            TrainStatus::TargetReached
        } else {
            TrainStatus::Completed
        };
        Ok(TrainOutcome {
            status,
            best: self.state.best,
            best_feasible: self.state.best_feasible,
            evaluations: self.state.evaluations,
            history,
        })
    }
}

/// Folds a scored candidate into the best-by-reward and best-feasible
/// records. Earlier designs win ties.
pub fn update_best<D: Clone>(best: &mut Option<BestDesign<D>>, best_feasible: &mut Option<BestDesign<D>>, candidate: BestDesign<D>) {
    if candidate.feasible && best_feasible.as_ref().is_none_or(|b| candidate.objective < b.objective) {
        *best_feasible = Some(candidate.clone());
    }
    if best.as_ref().is_none_or(|b| candidate.reward > b.reward) {
        *best = Some(candidate);
    }
}

pub fn train<P: DesignProblem>(problem: &P, cfg: TrainConfig) -> Result<TrainOutcome<P::Design>> {
    Trainer::new(problem, cfg)?.run(|_| {})
}
