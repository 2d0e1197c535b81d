//! Search baselines sharing the decoder, evaluator and reward shaping of
//! the trainer: a genetic algorithm, uniform random search and exhaustive
//! enumeration of small spaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action::CompoundAction;
use crate::design_space::{Cardinality, ParamValue};
use crate::error::{Error, Result};
use crate::objective::{EvalOutcome, RewardConfig, RewardShaper};
use crate::trainer::{evaluate_batch, update_best, worker_pool, BestDesign, DesignProblem, EpisodeReport, Evaluated, SampleRecord};

/// One gene per policy head, each in `[0, 1]`.
pub type Genome = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    /// Offspring generations after the initial population.
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub elitism: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 32,
            generations: 40_000 / 32 - 1,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma: 0.1,
            elitism: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.tournament == 0 {
            return Err(Error::Config("ga.population and ga.tournament must be >= 1".into()));
        }
        if self.elitism >= self.population {
            return Err(Error::Config("ga.elitism must be below ga.population".into()));
        }
        for (key, r) in [("ga.crossover_rate", self.crossover_rate), ("ga.mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{key} must lie in [0, 1], got {r}")));
            }
        }
        if !(self.mutation_sigma >= 0.0) {
            return Err(Error::Config("ga.mutation_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Evaluator calls one run makes.
    pub fn evaluations(&self) -> usize {
        self.population + self.generations * (self.population - self.elitism)
    }

    /// Largest generation count whose evaluations fit in `budget`.
    pub fn generations_for_budget(population: usize, elitism: usize, budget: usize) -> usize {
        budget.saturating_sub(population) / population.saturating_sub(elitism).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<D> {
    pub best: Option<BestDesign<D>>,
    pub best_feasible: Option<BestDesign<D>>,
    pub evaluations: usize,
    /// One entry per evaluated batch or generation.
    pub history: Vec<EpisodeReport>,
}

/// Evaluates genomes as one shaped batch and records the results.
struct Scorer<'p, P: DesignProblem> {
    problem: &'p P,
    pool: rayon::ThreadPool,
    shaper: RewardShaper,
    out: SearchOutcome<P::Design>,
}

impl<'p, P: DesignProblem> Scorer<'p, P> {
    fn new(problem: &'p P, reward: RewardConfig, workers: usize) -> Result<Self> {
        Ok(Scorer {
            problem,
            pool: worker_pool(workers)?,
            shaper: RewardShaper::new(reward)?,
            out: SearchOutcome {
                best: None,
                best_feasible: None,
                evaluations: 0,
                history: Vec::new(),
            },
        })
    }

    fn score(&mut self, genomes: &[Genome]) -> Result<Vec<f64>> {
        let heads = self.problem.space().heads();
        let actions: Vec<CompoundAction> = genomes.iter().map(|g| CompoundAction::from_genome(g, heads)).collect();
        let evaluated = evaluate_batch(self.problem, &actions, &self.pool);
        self.out.evaluations += genomes.len();
        let outcomes: Vec<EvalOutcome> = evaluated.iter().map(|e| e.outcome.clone()).collect();
        let shaped = self.shaper.shape(&outcomes)?;
        let batch = self.out.history.len();
        for (k, (ev, &reward)) in evaluated.into_iter().zip(&shaped.rewards).enumerate() {
            if let Evaluated {
                design: Some(design),
                outcome: EvalOutcome::Scored { metrics, violations },
            } = ev
            {
                let cand = BestDesign {
                    objective: self.problem.objective(&metrics),
                    feasible: violations.is_empty(),
                    design,
                    reward,
                    metrics,
                    episode: batch,
                    sample_index: k,
                };
                update_best(&mut self.out.best, &mut self.out.best_feasible, cand);
            }
        }
        let running = self.shaper.advance(&shaped)?;
        self.out.history.push(EpisodeReport {
            episode: batch,
            samples: actions
                .iter()
                .zip(&outcomes)
                .zip(&shaped.rewards)
                .map(|((a, o), &reward)| SampleRecord {
                    fingerprint: a.fingerprint(),
                    reward,
                    valid: !o.is_anomalous(),
                    violation_sum: o.violation_sum(),
                })
                .collect(),
            batch_mean: shaped.rewards.iter().sum::<f64>() / shaped.rewards.len() as f64,
            running_reward: running,
            best_reward: self.out.best.as_ref().map(|b| b.reward),
            best_feasible_objective: self.out.best_feasible.as_ref().map(|b| b.objective),
            objective: 0.0,
            grad_norm: 0.0,
            wall_secs: 0.0,
        });
        Ok(shaped.rewards)
    }
}

fn random_genome(rng: &mut impl Rng, n: usize) -> Genome {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn tournament<'a>(rng: &mut impl Rng, pop: &'a [(Genome, f64)], k: usize) -> &'a Genome {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..k {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.1 > best.1 {
            best = c;
        }
    }
    &best.0
}

/// Genetic algorithm over genomes: tournament selection, uniform crossover,
/// per-gene Gaussian mutation clipped to `[0, 1]`, and elitism. Elites keep
/// their score and are not re-evaluated.
pub fn ga_run<P: DesignProblem>(problem: &P, cfg: &GaConfig, reward: &RewardConfig, seed: u64, workers: usize) -> Result<SearchOutcome<P::Design>> {
    cfg.validate()?;
    let n = problem.space().heads().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.mutation_sigma).map_err(|e| Error::Config(format!("ga.mutation_sigma: {e}")))?;
    let mut scorer = Scorer::new(problem, reward.clone(), workers)?;

    let genomes: Vec<Genome> = (0..cfg.population).map(|_| random_genome(&mut rng, n)).collect();
    let fitness = scorer.score(&genomes)?;
    let mut pop: Vec<(Genome, f64)> = genomes.into_iter().zip(fitness).collect();

    for _ in 0..cfg.generations {
        let mut ranked: Vec<usize> = (0..pop.len()).collect();
        ranked.sort_by(|&a, &b| pop[b].1.total_cmp(&pop[a].1).then(a.cmp(&b)));
        let elites: Vec<(Genome, f64)> = ranked[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();

        let mut children = Vec::with_capacity(cfg.population - cfg.elitism);
        while children.len() < cfg.population - cfg.elitism {
            let a = tournament(&mut rng, &pop, cfg.tournament);
            let b = tournament(&mut rng, &pop, cfg.tournament);
            let cross = rng.random::<f64>() < cfg.crossover_rate;
            let child: Genome = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let mut g = if cross && rng.random::<bool>() { y } else { x };
                    if rng.random::<f64>() < cfg.mutation_rate {
                        g = (g + noise.sample(&mut rng)).clamp(0.0, 1.0);
                    }
                    g
                })
                .collect();
            children.push(child);
        }
        let fitness = scorer.score(&children)?;
        pop = elites.into_iter().chain(children.into_iter().zip(fitness)).collect();
    }
    Ok(scorer.out)
}

/// Batch size used to shape random-search rewards.
pub const RANDOM_BATCH: usize = 32;

/// `budget` independent uniform genomes from one seeded stream, so a
/// larger budget extends a smaller one.
pub fn random_search<P: DesignProblem>(problem: &P, budget: usize, reward: &RewardConfig, seed: u64, workers: usize) -> Result<SearchOutcome<P::Design>> {
    if budget == 0 {
        return Err(Error::Config("random.budget must be >= 1".into()));
    }
    let n = problem.space().heads().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scorer = Scorer::new(problem, reward.clone(), workers)?;
    let mut left = budget;
    while left > 0 {
        let take = left.min(RANDOM_BATCH);
        let genomes: Vec<Genome> = (0..take).map(|_| random_genome(&mut rng, n)).collect();
        scorer.score(&genomes)?;
        left -= take;
    }
    Ok(scorer.out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub index: usize,
    pub objective: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome<D> {
    pub evaluated: usize,
    /// Lowest objective among configurations without violations.
    pub best: Option<(D, f64)>,
    pub rows: Vec<OracleRow>,
}

const ORACLE_CHUNK: usize = 4096;

/// Evaluates every decodable configuration. Refuses spaces larger than
/// `limit`.
pub fn exhaustive<P: DesignProblem>(problem: &P, limit: u128, workers: usize) -> Result<OracleOutcome<P::Design>> {
    match problem.space().cardinality(limit) {
        Cardinality::ExceedsLimit => {
            return Err(Error::TooLarge {
                count: format!("more than {limit}"),
                limit,
            })
        }
        Cardinality::Exact(n) if n > limit => {
            return Err(Error::TooLarge {
                count: n.to_string(),
                limit,
            })
        }
        Cardinality::Exact(_) => {}
    }
    let pool = worker_pool(workers)?;
    let mut out = OracleOutcome {
        evaluated: 0,
        best: None,
        rows: Vec::new(),
    };
    let mut pending: Vec<Vec<ParamValue>> = Vec::new();
    let mut failure = None;
    let flush = |pending: &mut Vec<Vec<ParamValue>>, out: &mut OracleOutcome<P::Design>| -> Result<()> {
        use rayon::prelude::*;
        let results: Vec<Result<(P::Design, EvalOutcome)>> = pool.install(|| {
            pending
                .par_iter()
                .map(|v| {
                    let d = problem.build(v)?;
                    let o = problem.evaluate(&d);
                    Ok((d, o))
                })
                .collect()
        });
        pending.clear();
        for r in results {
            let (d, o) = r?;
            let index = out.evaluated;
            out.evaluated += 1;
            let (objective, feasible) = match &o {
                EvalOutcome::Scored { metrics, violations } => (Some(problem.objective(metrics)), violations.is_empty()),
                EvalOutcome::Anomalous { .. } => (None, false),
            };
            if let (Some(obj), true) = (objective, feasible) {
                if out.best.as_ref().is_none_or(|(_, b)| obj < *b) {
                    out.best = Some((d, obj));
                }
            }
            out.rows.push(OracleRow { index, objective, feasible });
        }
        Ok(())
    };
    problem.space().for_each_config(|values| {
        if failure.is_some() {
            return;
        }
        pending.push(values.to_vec());
        if pending.len() == ORACLE_CHUNK {
            if let Err(e) = flush(&mut pending, &mut out) {
                failure = Some(e);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    flush(&mut pending, &mut out)?;
    Ok(out)
}
