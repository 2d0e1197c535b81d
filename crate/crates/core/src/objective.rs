//! Rewards, constraint-aware shaping, the running-reward baseline and the
//! KL- and entropy-regularized surrogate objective.

use serde::{Deserialize, Serialize};

use crate::action::CompoundAction;
use crate::error::{Error, Result};
use crate::policy::{ContextState, DistributionSet, PolicyParams};

/// Log-ratios are clamped to ±this before exponentiating.
pub const LOG_RATIO_CLAMP: f64 = 20.0;

/// How violations and anomalous designs are rewarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shaping {
    /// Graded penalty for violations, batch-relative reward for anomalies.
    Graded,
    /// A constant reward for any violating or anomalous design.
    Fixed { penalty: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Per-metric weights; negative for lower-is-better metrics.
    pub weights: Vec<f64>,
    /// Violation penalty rate.
    pub alpha_c: f64,
    /// Anomalous-design penalty rate.
    pub alpha_p: f64,
    /// Reward for anomalous designs in the first episode.
    pub r_ano: f64,
    /// Renewal rate of the running reward.
    pub alpha_r: f64,
    /// KL factor.
    pub beta_r: f64,
    /// Entropy coefficient, decayed linearly from the first to the second
    /// value over the run.
    pub beta_e: (f64, f64),
    pub shaping: Shaping,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            weights: vec![-1.0, 0.0],
            alpha_c: 1e6,
            alpha_p: 1.0,
            r_ano: -1e9,
            alpha_r: 0.2,
            beta_r: 1.0,
            beta_e: (1.0, 0.02),
            shaping: Shaping::Graded,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_r) {
            return Err(Error::Config(format!("reward.alpha_r must lie in [0, 1], got {}", self.alpha_r)));
        }
        if self.alpha_c < 0.0 || self.alpha_p < 0.0 {
            return Err(Error::Config("reward.alpha_c and reward.alpha_p must be >= 0".into()));
        }
        Ok(())
    }
}

/// A performance-constraint residual `h_j > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub residual: f64,
}

/// What the evaluator says about one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EvalOutcome {
    Scored { metrics: Vec<f64>, violations: Vec<Violation> },
    Anomalous { reason: String },
}

impl EvalOutcome {
    /// Builds a scored outcome, dropping residuals that are not positive.
    pub fn scored(metrics: Vec<f64>, violations: Vec<Violation>) -> Self {
        EvalOutcome::Scored {
            metrics,
            violations: violations.into_iter().filter(|v| v.residual > 0.0).collect(),
        }
    }

    pub fn is_anomalous(&self) -> bool {
        matches!(self, EvalOutcome::Anomalous { .. })
    }

    pub fn violation_sum(&self) -> f64 {
        match self {
            EvalOutcome::Scored { violations, .. } => violations.iter().map(|v| v.residual.max(0.0)).sum(),
            EvalOutcome::Anomalous { .. } => 0.0,
        }
    }
}

/// `wᵀU − α_c Σ_j max(h_j, 0)`.
pub fn scalar_reward(metrics: &[f64], violations: &[Violation], cfg: &RewardConfig) -> Result<f64> {
    if metrics.len() != cfg.weights.len() {
        return Err(Error::Shape {
            context: "reward weights",
            expected: cfg.weights.len(),
            actual: metrics.len(),
        });
    }
    let base: f64 = cfg.weights.iter().zip(metrics).map(|(w, u)| w * u).sum();
    let penalty: f64 = violations.iter().map(|v| v.residual.max(0.0)).sum();
    Ok(base - cfg.alpha_c * penalty)
}

/// Reward for a design the evaluator could not score, at 1-based episode
/// `t`. Batch means are over scored designs only; if either is undefined
/// the initial reward is used.
pub fn anomalous_reward(
    prev_batch_mean: Option<f64>,
    running_prev: f64,
    cur_batch_mean: Option<f64>,
    t: usize,
    cfg: &RewardConfig,
) -> f64 {
    match (t, prev_batch_mean, cur_batch_mean) {
        (0 | 1, _, _) => cfg.r_ano,
        (_, Some(prev), Some(cur)) => prev.min(running_prev) - cfg.alpha_p * cur,
        _ => cfg.r_ano,
    }
}

/// `α_r · mean(batch) + (1 − α_r) · R̂_prev`.
pub fn update_running(running_prev: f64, batch: &[f64], alpha_r: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mean = batch.iter().sum::<f64>() / batch.len() as f64;
    Ok(alpha_r * mean + (1.0 - alpha_r) * running_prev)
}

pub fn advantages(rewards: &[f64], running: f64) -> Vec<f64> {
    rewards.iter().map(|r| r - running).collect()
}

/// Exponential moving average of batch rewards. Starts at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningReward {
    pub value: f64,
    pub episode: usize,
}

/// Stateful reward shaping across a run: holds the running reward and the
/// previous batch's mean over scored designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardShaper {
    pub cfg: RewardConfig,
    pub running: RunningReward,
    pub prev_scored_mean: Option<f64>,
}

/// Shaped rewards of one batch before the running reward moves.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedBatch {
    pub rewards: Vec<f64>,
    pub scored_mean: Option<f64>,
}

impl RewardShaper {
    pub fn new(cfg: RewardConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(RewardShaper {
            cfg,
            running: RunningReward::default(),
            prev_scored_mean: None,
        })
    }

    /// Episode number the next batch belongs to (1-based).
    pub fn next_episode(&self) -> usize {
        self.running.episode + 1
    }

    pub fn shape(&self, outcomes: &[EvalOutcome]) -> Result<ShapedBatch> {
        let mut rewards = vec![f64::NAN; outcomes.len()];
        let mut scored = Vec::with_capacity(outcomes.len());
        for (slot, o) in rewards.iter_mut().zip(outcomes) {
            if let EvalOutcome::Scored { metrics, violations } = o {
                *slot = match self.cfg.shaping {
                    Shaping::Fixed { penalty } if !violations.is_empty() => penalty,
                    _ => scalar_reward(metrics, violations, &self.cfg)?,
                };
                scored.push(*slot);
            }
        }
        let scored_mean = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
        let anomalous = match self.cfg.shaping {
            Shaping::Fixed { penalty } => penalty,
            Shaping::Graded => anomalous_reward(
                self.prev_scored_mean,
                self.running.value,
                scored_mean,
                self.next_episode(),
                &self.cfg,
            ),
        };
        for (slot, o) in rewards.iter_mut().zip(outcomes) {
            if o.is_anomalous() {
                *slot = anomalous;
            }
        }
        Ok(ShapedBatch { rewards, scored_mean })
    }

    /// Moves the running reward with this batch and returns the new value.
    pub fn advance(&mut self, batch: &ShapedBatch) -> Result<f64> {
        self.running.value = update_running(self.running.value, &batch.rewards, self.cfg.alpha_r)?;
        self.running.episode += 1;
        self.prev_scored_mean = batch.scored_mean;
        Ok(self.running.value)
    }
}

fn ratio(log_prob: f64, log_prob_old: f64) -> (f64, bool) {
    let d = log_prob - log_prob_old;
    if d.is_nan() {
        return (f64::NAN, false);
    }
    let inside = d.abs() <= LOG_RATIO_CLAMP;
    (d.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP).exp(), inside)
}

fn check_batch(actions: &[CompoundAction], advantages: &[f64]) -> Result<()> {
    if actions.len() != advantages.len() {
        return Err(Error::Shape {
            context: "surrogate batch",
            expected: actions.len(),
            actual: advantages.len(),
        });
    }
    if actions.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

/// `(1/E) Σ_k ratio_k · A_k − β_r · KL(current ‖ snapshot) + β_e · H(current)`.
pub fn surrogate_objective(
    current: &DistributionSet,
    snapshot: &DistributionSet,
    actions: &[CompoundAction],
    advantages: &[f64],
    beta_r: f64,
    beta_e: f64,
) -> Result<f64> {
    check_batch(actions, advantages)?;
    let mut update = 0.0;
    for (a, &adv) in actions.iter().zip(advantages) {
        let (r, _) = ratio(current.log_prob(a)?, snapshot.log_prob(a)?);
        if !r.is_finite() {
            return Err(Error::Numeric {
                context: "probability ratio",
                layer: 0,
            });
        }
        update += r * adv;
    }
    update /= actions.len() as f64;
    Ok(update - beta_r * current.kl(snapshot)? + beta_e * current.entropy())
}

/// Objective value and its gradient in the natural head parameters of
/// `current`.
pub fn surrogate_natural_gradient(
    current: &DistributionSet,
    snapshot: &DistributionSet,
    actions: &[CompoundAction],
    advantages: &[f64],
    beta_r: f64,
    beta_e: f64,
) -> Result<(f64, Vec<f64>)> {
    let value = surrogate_objective(current, snapshot, actions, advantages, beta_r, beta_e)?;
    let mut grad = vec![0.0; current.width()];
    let e = actions.len() as f64;
    for (a, &adv) in actions.iter().zip(advantages) {
        let (r, inside) = ratio(current.log_prob(a)?, snapshot.log_prob(a)?);
        if inside && adv != 0.0 {
            current.add_log_prob_grad(a, r * adv / e, &mut grad)?;
        }
    }
    if beta_r != 0.0 {
        current.add_kl_grad(snapshot, -beta_r, &mut grad)?;
    }
    if beta_e != 0.0 {
        current.add_entropy_grad(beta_e, &mut grad);
    }
    Ok((value, grad))
}

/// Surrogate objective of a policy and its gradient over every weight.
pub fn surrogate_gradient(
    params: &PolicyParams,
    s0: &ContextState,
    snapshot: &DistributionSet,
    actions: &[CompoundAction],
    advantages: &[f64],
    beta_r: f64,
    beta_e: f64,
) -> Result<(f64, Vec<f64>)> {
    let (current, cache) = params.forward_cached(s0)?;
    let (value, natural) = surrogate_natural_gradient(&current, snapshot, actions, advantages, beta_r, beta_e)?;
    Ok((value, params.backward(&cache, &natural)?))
}
