//! Search methods on a one-parameter problem whose optimum is known.

use core_dse::baselines::{exhaustive, ga_run, random_search, GaConfig};
use core_dse::design_space::{ParamSpec, ParamValue, ParameterSpace};
use core_dse::objective::{EvalOutcome, RewardConfig};
use core_dse::policy::PolicyConfig;
use core_dse::trainer::{train, DesignProblem, TrainConfig};
use core_dse::Result;

/// Pick an integer in `0..=15`; the reward is `−|v − 7|`.
struct Seven {
    space: ParameterSpace,
}

impl Seven {
    fn new() -> Self {
        Seven {
            space: ParameterSpace::new(vec![ParamSpec::ranged("v", 0, 15, 1)]).unwrap(),
        }
    }
}

impl DesignProblem for Seven {
    type Design = i64;
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn build(&self, values: &[ParamValue]) -> Result<i64> {
        Ok(values[0].as_int().unwrap())
    }
    fn evaluate(&self, v: &i64) -> EvalOutcome {
        EvalOutcome::scored(vec![(v - 7).abs() as f64], vec![])
    }
    fn objective(&self, m: &[f64]) -> f64 {
        m[0]
    }
}

fn reward() -> RewardConfig {
    RewardConfig {
        weights: vec![-1.0],
        ..Default::default()
    }
}

#[test]
fn oracle_finds_seven() {
    let out = exhaustive(&Seven::new(), 100, 2).unwrap();
    assert_eq!(out.evaluated, 16);
    assert_eq!(out.best, Some((7, 0.0)));
}

#[test]
fn policy_concentrates_on_seven() {
    let p = Seven::new();
    let hits = (0..10)
        .filter(|&seed| {
            let cfg = TrainConfig {
                batch_size: 16,
                max_episodes: 200,
                budget: 200 * 16,
                learning_rate: 1e-3,
                seed,
                policy: PolicyConfig::desk(32),
                reward: RewardConfig {
                    beta_e: (0.1, 0.002),
                    ..reward()
                },
                ..Default::default()
            };
            let out = train(&p, cfg).unwrap();
            // The late batches should sit near the optimum, not only the
            // best-ever sample. Uniform sampling averages a distance of 4.
            let late: Vec<f64> = out.history[190..].iter().flat_map(|r| r.samples.iter().map(|s| -s.reward)).collect();
            let distance = late.iter().sum::<f64>() / late.len() as f64;
            out.best_feasible.map(|b| b.design) == Some(7) && distance < 1.0
        })
        .count();
    assert!(hits >= 9, "{hits}/10 seeds converged");
}

#[test]
fn ga_finds_seven() {
    let p = Seven::new();
    let cfg = GaConfig {
        population: 16,
        generations: 20,
        ..Default::default()
    };
    let hits = (0..10)
        .filter(|&seed| ga_run(&p, &cfg, &reward(), seed, 1).unwrap().best_feasible.map(|b| b.design) == Some(7))
        .count();
    assert!(hits >= 9, "{hits}/10 seeds");
}

#[test]
fn random_search_miss_rate() {
    // One draw misses with probability 15/16, so 64 draws miss with
    // probability about 0.016. Over 100 seeds, seven or more misses has
    // probability below 1e-3.
    let p = Seven::new();
    let misses = (0..100)
        .filter(|&seed| random_search(&p, 64, &reward(), seed, 1).unwrap().best_feasible.map(|b| b.design) != Some(7))
        .count();
    assert!(misses < 7, "{misses} misses");
}
