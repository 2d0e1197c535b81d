//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fail. Pass criterion numbers to run a subset.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use core_dse::action::CompoundAction;
use core_dse::cli::{cmd_oracle, cmd_run, Method, RunSpec, RunSummary};
use core_dse::design_space::{decode_order, decode_range, decode_scaled, AccelSpace, AccelSpaceOptions, Dim, Layer, LayerMapping, LevelMapping, Workload};
use core_dse::objective::{advantages, anomalous_reward, scalar_reward, surrogate_gradient, surrogate_objective, update_running, RewardConfig, Violation};
use core_dse::policy::{ContextState, DistributionSet, Head, PolicyConfig, PolicyParams};
use core_dse::sim::{area, layer_latency, tensor_volume, traffic, CostConstants, Tensor};
use core_dse::trainer::entropy_coefficient;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEEDS: u64 = 10;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn workload(name: &str) -> Workload {
    Workload::load(&root().join("workloads").join(name)).unwrap()
}

fn spec(name: &str) -> RunSpec {
    RunSpec::load(&root().join("configs").join(name)).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs `base` once per seed into a scratch directory.
fn per_seed(base: &RunSpec, method: Method, scratch: &Path) -> Vec<RunSummary> {
    (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let s = RunSpec {
                method,
                seed,
                out: scratch.join(format!("{}-{seed}", method.name())),
                ..base.clone()
            };
            cmd_run(&s).unwrap()
        })
        .collect()
}

fn best(s: &RunSummary) -> f64 {
    s.best_objective.unwrap_or(f64::INFINITY)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn c1_feasible_by_construction() -> Verdict {
    let t = Instant::now();
    let w = workload("resnet3.txt");
    let space = AccelSpace::new(&w, &AccelSpaceOptions::default()).unwrap();
    let heads = space.space().heads().to_vec();
    let n = 100_000u64;
    let bad: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            // A slice of the batch sits exactly on the interval ends.
            let genes: Vec<f64> = match i % 50 {
                0 => vec![0.0; heads.len()],
                1 => vec![1.0; heads.len()],
                2 => heads.iter().map(|_| if rng.random_bool(0.5) { 0.0 } else { 1.0 }).collect(),
                _ => heads.iter().map(|_| rng.random::<f64>()).collect(),
            };
            let (cfg, _) = space.decode_config(&CompoundAction::from_genome(&genes, &heads)).unwrap();
            usize::from(!cfg.is_feasible(&w))
        })
        .sum();
    let el = t.elapsed();
    verdict(bad == 0 && within(el, 60), format!("{} of {n} decoded configs feasible in {el:.1?}", n as usize - bad))
}

fn c2_gradient() -> Verdict {
    let t = Instant::now();
    let w = workload("resnet3.txt");
    let space = AccelSpace::new(&w, &AccelSpaceOptions::default()).unwrap();
    let heads = space.space().heads().to_vec();
    let pc = PolicyConfig::desk(64);
    let s0 = ContextState::ones(pc.input_width);
    let h = 1e-4;
    let worst = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = PolicyParams::init(&pc, &heads, &mut rng);
            // Snapshot a little away from the current weights so the ratio
            // and KL terms are both active.
            let mut old = p.clone();
            for v in old.as_mut_slice() {
                *v += rng.random_range(-0.02..0.02);
            }
            let snap = old.forward(&s0).unwrap();
            let actions: Vec<CompoundAction> = (0..8).map(|_| snap.sample(&mut rng)).collect();
            let adv: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = surrogate_gradient(&p, &s0, &snap, &actions, &adv, 1.0, 0.5).unwrap();
            let f = |q: &PolicyParams| surrogate_objective(&q.forward(&s0).unwrap(), &snap, &actions, &adv, 1.0, 0.5).unwrap();
            // A sample from the output layer and one from the layers below it.
            let n = p.len();
            let width: usize = heads.iter().map(|k| k.width()).sum();
            let split = n - (pc.hidden_width + 1) * width;
            let coords: Vec<usize> = (0..300).map(|k| if k % 2 == 0 { rng.random_range(split..n) } else { rng.random_range(0..split) }).collect();
            coords
                .into_iter()
                .map(|i| {
                    let mut a = p.clone();
                    a.as_mut_slice()[i] += h;
                    let mut b = p.clone();
                    b.as_mut_slice()[i] -= h;
                    let fd = (f(&a) - f(&b)) / (2.0 * h);
                    (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6)
                })
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let el = t.elapsed();
    verdict(worst < 1e-3 && within(el, 120), format!("max relative error {worst:.2e} over 20 seeds in {el:.1?}"))
}

fn c3_oracle(scratch: &Path) -> Verdict {
    let t = Instant::now();
    let base = spec("toy.json");
    let oracle = cmd_oracle(&RunSpec { out: scratch.join("oracle"), ..base.clone() }, 50_000).unwrap();
    let opt = oracle.best_objective.unwrap();
    let runs = per_seed(&base, Method::Core, &scratch.join("c3"));
    let hits = runs.iter().filter(|s| best(s) <= opt * 1.05).count();
    let el = t.elapsed();
    let episodes = base.train.episodes();
    verdict(
        hits >= 8 && oracle.evaluations <= 50_000 && episodes <= 300 && base.train.batch_size == 16 && within(el, 600),
        format!("oracle optimum {opt} over {} configs; {hits}/{SEEDS} seeds within 5% in {episodes} episodes; {el:.1?}", oracle.evaluations),
    )
}

fn c4_baselines(scratch: &Path) -> Verdict {
    let core = per_seed(&spec("resnet3-edge.json"), Method::Core, &scratch.join("c4"));
    let ga = per_seed(&spec("resnet3-edge-ga.json"), Method::Ga, &scratch.join("c4"));
    let random = per_seed(&spec("resnet3-edge-random.json"), Method::Random, &scratch.join("c4"));
    let budget_ok = core.iter().chain(&ga).chain(&random).all(|s| s.evaluations <= 10_000);
    let [c, g, r] = [&core, &ga, &random].map(|v| median(v.iter().map(best).collect()));
    verdict(
        budget_ok && c <= g && c <= r,
        format!("median best latency: core {c:.0}, ga {g:.0}, random {r:.0}; ga/core {:.3}, random/core {:.3}", g / c, r / c),
    )
}

fn c5_ablation(scratch: &Path) -> Verdict {
    let base = spec("toy.json");
    let dir = scratch.join("c5");
    let full = per_seed(&base, Method::Core, &dir);
    let no_rs = per_seed(&base, Method::CoreNoShaping, &dir);
    let no_sc = per_seed(&base, Method::CoreNoScaling, &dir);
    let [f, a, b] = [&full, &no_rs, &no_sc].map(|v| median(v.iter().map(best).collect()));
    let rate = |v: &[RunSummary]| v.iter().map(|s| s.valid_rate).sum::<f64>() / v.len() as f64;
    let full_rate_min = full.iter().map(|s| s.valid_rate).fold(1.0, f64::min);
    verdict(
        a >= f && b >= f && rate(&no_sc) < 1.0 && full_rate_min == 1.0,
        format!(
            "median best: full {f:.0}, no shaping {a:.0}, no scaling {b:.0}; feasibility full {:.4}, no scaling {:.4}",
            rate(&full),
            rate(&no_sc)
        ),
    )
}

fn c6_algebra() -> Verdict {
    let tol = 1e-9;
    let close = |a: f64, b: f64| (a - b).abs() <= tol;
    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };
    check("range lower", decode_range(0.0, 2, 1024, 2).unwrap() == 2);
    check("range middle", decode_range(0.5, 2, 1024, 2).unwrap() == 514);
    check("range upper", decode_range(1.0, 2, 1024, 2).unwrap() == 1024);
    check("scaled min bound", decode_scaled(0.5, 1, 1, &[64, 32]).unwrap() == 17);
    check("scaled lower", decode_scaled(0.0, 1, 1, &[5]).unwrap() == 1);
    check("scaled upper", decode_scaled(1.0, 1, 1, &[5]).unwrap() == 5);
    use Dim::*;
    check("order ties", decode_order(&[0.5; 6]) == [S, R, K, C, X, Y]);
    check("order sorted", decode_order(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]) == [Y, X, C, K, R, S]);

    let cfg = RewardConfig { weights: vec![-1.0, -1e6], alpha_c: 1.0, ..Default::default() };
    check("reward", close(scalar_reward(&[100.0, 0.1], &[], &cfg).unwrap(), -100_100.0));
    let v = [Violation { constraint: "area".into(), residual: 2.0 }];
    check("reward with violation", close(scalar_reward(&[100.0, 0.1], &v, &cfg).unwrap(), -100_102.0));

    check("ema", close(update_running(0.0, &[10.0], 0.2).unwrap(), 2.0));
    check("ema renew all", close(update_running(3.0, &[10.0, 20.0], 1.0).unwrap(), 15.0));
    check("ema keep", close(update_running(3.0, &[10.0], 0.0).unwrap(), 3.0));

    let r = [1.0, 3.0, -7.5];
    let a0 = advantages(&r, 2.0);
    check("advantages", close(a0[0], -1.0) && close(a0[1], 1.0));
    for c in [-1e3, 0.25, 42.0] {
        let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
        let a1 = advantages(&shifted, 2.0 + c);
        check("translation invariance", a0.iter().zip(&a1).all(|(x, y)| close(*x, *y)));
    }

    let ano = RewardConfig::default();
    check("anomalous first episode", close(anomalous_reward(Some(-5.0), -4.0, Some(-6.0), 1, &ano), ano.r_ano));
    check("anomalous later", close(anomalous_reward(Some(-5.0), -4.0, Some(-6.0), 2, &ano), 1.0));
    check("anomalous no valid", close(anomalous_reward(Some(-5.0), -4.0, None, 3, &ano), ano.r_ano));
    let off = RewardConfig { alpha_p: 0.0, ..Default::default() };
    check("anomalous no penalty", close(anomalous_reward(Some(-3.0), -3.0, Some(-9.0), 4, &off), -3.0));

    let uniform = DistributionSet::new(vec![Head::beta(1.0, 1.0)]);
    check("beta(1,1) entropy", close(uniform.entropy(), 0.0));
    let cat6 = DistributionSet::new(vec![Head::from_probs(vec![1.0 / 6.0; 6])]);
    check("categorical entropy", close(cat6.entropy(), 6f64.ln()));
    let p = DistributionSet::new(vec![Head::from_probs(vec![0.5, 0.5])]);
    let q = DistributionSet::new(vec![Head::from_probs(vec![0.9, 0.1])]);
    check("categorical kl", close(p.kl(&q).unwrap(), 0.5 * (0.5f64 / 0.9).ln() + 0.5 * 5f64.ln()));
    check("kl self", close(p.kl(&p).unwrap(), 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let mut h = || Head::beta(rng.random_range(1.0..20.0), rng.random_range(1.0..20.0));
        let a = DistributionSet::new(vec![h(), h()]);
        let b = DistributionSet::new(vec![h(), h()]);
        if a.kl(&b).unwrap() < -tol {
            check("kl nonnegative", false);
            break;
        }
    }

    check("entropy start", close(entropy_coefficient(0, 101, 1.0, 0.02), 1.0));
    check("entropy end", close(entropy_coefficient(100, 101, 1.0, 0.02), 0.02));
    check("entropy middle", close(entropy_coefficient(50, 101, 1.0, 0.02), 0.51));
    let n = failed.len();
    verdict(n == 0, if n == 0 { "all identities hold to 1e-9".into() } else { format!("failed: {}", failed.join(", ")) })
}

fn c7_determinism(scratch: &Path) -> Verdict {
    let mut base = spec("toy.json");
    base.train.max_episodes = 40;
    base.seed = 3;
    let mut broken = Vec::new();
    for method in [Method::Core, Method::Ga, Method::Random] {
        let mut s = RunSpec { method, ..base.clone() };
        s.ga.generations = 20;
        s.random_budget = 640;
        let logs: Vec<Vec<u8>> = [1, 4, 32]
            .into_iter()
            .map(|workers| {
                let out = scratch.join(format!("c7-{}-{workers}", method.name()));
                cmd_run(&RunSpec { workers, out: out.clone(), ..s.clone() }).unwrap();
                std::fs::read(out.join("history.csv")).unwrap()
            })
            .collect();
        if logs[0].is_empty() || logs.iter().any(|l| l != &logs[0]) {
            broken.push(method.name());
        }
    }
    verdict(broken.is_empty(), if broken.is_empty() { "history.csv identical for workers 1, 4, 32 (core, ga, random)".into() } else { format!("differs: {broken:?}") })
}

/// Counts tile fetches by walking the loop nest with a single resident tile.
fn walk_fetches(tensor: Tensor, outer: &[u64; 6], tiles: &[u64; 6], order: &[Dim; 6]) -> u128 {
    let trips: Vec<u64> = order.iter().map(|d| outer[d.index()].div_ceil(tiles[d.index()])).collect();
    let mut idx = [0u64; 6];
    let mut resident: Option<Vec<u64>> = None;
    let mut fetches = 0u128;
    loop {
        let key: Vec<u64> = (0..6).filter(|&p| tensor.relevant(order[p])).map(|p| idx[p]).collect();
        if resident.as_ref() != Some(&key) {
            fetches += 1;
            resident = Some(key);
        }
        let mut p = 6;
        loop {
            if p == 0 {
                return fetches;
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < trips[p] {
                break;
            }
            idx[p] = 0;
        }
    }
}

fn c8_cost_invariants() -> Verdict {
    let consts = CostConstants::default();
    let bpe = consts.bytes_per_element as u128;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 10_000;
    let mut counts = [0usize; 4];
    let mut failures = Vec::new();
    let random_order = |rng: &mut ChaCha8Rng| {
        let mut o = Dim::ALL;
        for i in (1..6).rev() {
            o.swap(i, rng.random_range(0..=i));
        }
        o
    };

    for _ in 0..n {
        let dims: [u64; 6] = std::array::from_fn(|_| rng.random_range(1..=24));
        let layer = Layer::new(dims[2], dims[3], dims[4], dims[5], dims[1], dims[0]);
        let t2: [u64; 6] = std::array::from_fn(|i| rng.random_range(1..=dims[i]));
        let t1: [u64; 6] = std::array::from_fn(|i| rng.random_range(1..=t2[i]));
        let (o1, o2) = (random_order(&mut rng), random_order(&mut rng));
        for t in Tensor::ALL {
            let full = bpe * tensor_volume(t, &dims) as u128;
            if traffic(t, &dims, &t2, &o2, &consts) < full {
                failures.push("dram traffic below tensor size");
            }
            if traffic(t, &t2, &t1, &o1, &consts) < bpe * tensor_volume(t, &t2) as u128 {
                failures.push("l2 traffic below tile size");
            }
        }
        counts[0] += 1;

        let n_pe = 2 * rng.random_range(1..=512u64);
        let p2d = Dim::ALL[rng.random_range(0..6)];
        let p1d = Dim::ALL[rng.random_range(0..6)];
        let mapping = LayerMapping {
            levels: [
                LevelMapping { loop_order: o1, parallel_dim: p1d, parallelism: rng.random_range(1..=n_pe.min(t2[p1d.index()])), tiles: t1 },
                LevelMapping { loop_order: o2, parallel_dim: p2d, parallelism: rng.random_range(1..=t2[p2d.index()]), tiles: t2 },
            ],
        };
        let m = layer_latency(&mapping, &layer, n_pe, &consts);
        if m.latency_cycles < layer.macs().div_ceil(n_pe) {
            failures.push("latency below compute bound");
        }
        counts[1] += 1;

        let (l1, l2) = (rng.random_range(1..1u64 << 20), rng.random_range(1..1u64 << 30));
        let a = area(n_pe, l1, l2, &consts);
        if !(area(n_pe + 2, l1, l2, &consts) > a && area(n_pe, l1 + 1, l2, &consts) > a && area(n_pe, l1, l2 + 1, &consts) > a) {
            failures.push("area not monotone");
        }
        counts[2] += 1;
    }

    // Refetch rule against an explicit walk of the loop nest. The walk only
    // refetches on a tile change, so it agrees with the rule whenever the
    // innermost relevant loop runs more than once.
    while counts[3] < n {
        let outer: [u64; 6] = std::array::from_fn(|_| rng.random_range(1..=6));
        let tiles: [u64; 6] = std::array::from_fn(|i| rng.random_range(1..=outer[i]));
        let order = random_order(&mut rng);
        for t in Tensor::ALL {
            let inner = order.iter().rposition(|&d| t.relevant(d)).unwrap();
            let d = order[inner].index();
            if outer[d].div_ceil(tiles[d]) < 2 {
                continue;
            }
            let want = bpe * tensor_volume(t, &tiles) as u128 * walk_fetches(t, &outer, &tiles, &order);
            if traffic(t, &outer, &tiles, &order, &consts) != want {
                failures.push("refetch rule disagrees with loop walk");
            }
            counts[3] += 1;
        }
    }
    failures.dedup();
    verdict(
        failures.is_empty(),
        format!(
            "{} traffic, {} latency, {} area, {} refetch cases{}",
            counts[0],
            counts[1],
            counts[2],
            counts[3],
            if failures.is_empty() { String::new() } else { format!("; failed: {failures:?}") }
        ),
    )
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let scratch = tempfile::tempdir().unwrap();
    let dir = scratch.path();
    let criteria: [(usize, &str, &dyn Fn() -> Verdict); 8] = [
        (1, "feasibility by construction", &c1_feasible_by_construction),
        (2, "gradient correctness", &c2_gradient),
        (3, "oracle optimality on the toy space", &|| c3_oracle(dir)),
        (4, "baseline dominance", &|| c4_baselines(dir)),
        (5, "ablation direction", &|| c5_ablation(dir)),
        (6, "exact algebra", &c6_algebra),
        (7, "determinism across worker counts", &|| c7_determinism(dir)),
        (8, "cost-model invariants", &c8_cost_invariants),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let v = run();
        failed += usize::from(!v.pass);
        println!("criterion {id} {}: {name}: {} ({:.1?})", if v.pass { "PASS" } else { "FAIL" }, v.detail, t.elapsed());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
