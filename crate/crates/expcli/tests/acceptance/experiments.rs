//! Training experiments run through the experiment runner.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mbppol::cmdp_env::{gaussian_bin_probabilities, DiscreteCmdp, HazardGoalConfig};
use mbppol::lagrangian_ppo::{Agent, LagrangeConfig, PpoConfig};
use mbppol::dynamics_model::EnsembleConfig;
use mbppol::metrics::{convergence_epoch, moving_average};
use mbppol::parallel::Execution;
use mbppol_cli::runner::ModelFreeCheckpoint;
use mbppol_cli::{outer_rows, read_log, run_experiment, seed_dir, EnvConfig, LogRow, ModelBasedSection, RunConfig};

use super::Outcome;

pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const BETAS: [f64; 3] = [0.02, 0.5, 1.0];
pub const HAZARD_LIMIT: f64 = 2.0;
pub const MODEL_FREE_BUDGET: u64 = 200_000;
pub const MODEL_BASED_BUDGET: u64 = 30_000;
/// Tightening used by the model-based agent in the paired comparison.
pub const PAIRED_BETA: f64 = 0.5;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    dir
}

fn run(cfg: &RunConfig) -> Vec<Vec<LogRow>> {
    let report = run_experiment(cfg).unwrap();
    assert!(report.failures.is_empty(), "seeds failed: {:?}", report.failures);
    cfg.seeds
        .iter()
        .map(|&s| read_log(&seed_dir(&cfg.out_dir, s).join("log.csv")).unwrap())
        .collect()
}

pub fn chain_config(out_dir: PathBuf) -> RunConfig {
    RunConfig {
        agent: Agent::PpoLagrangian,
        env: EnvConfig::Chain3,
        seeds: SEEDS.to_vec(),
        budget: 150_000,
        episodes_per_epoch: 128,
        ppo: PpoConfig {
            actor_hidden: vec![16],
            critic_hidden: vec![16],
            minibatch_size: 0,
            entropy_coef: 0.05,
            ..PpoConfig::default()
        },
        lagrange: LagrangeConfig {
            lambda_init: 1.0,
            lr: 0.5,
            cost_limit: 0.5,
            beta: 1.0,
        },
        execution: Execution::Sequential,
        out_dir,
        ..RunConfig::default()
    }
}

pub fn oracle_feasibility() -> Outcome {
    let start = Instant::now();
    let cfg = chain_config(scratch("chain3"));
    run(&cfg);
    let env = DiscreteCmdp::chain3();
    let d = cfg.lagrange.cost_limit;
    let oracle = env.oracle_solve(d).unwrap();
    // the optimum over stationary policies can only improve on the best
    // feasible deterministic policy found by enumeration
    let best_deterministic = env
        .enumerate_deterministic()
        .unwrap()
        .into_iter()
        .filter(|(_, v)| v.cost <= d)
        .map(|(_, v)| v.reward)
        .fold(f64::NEG_INFINITY, f64::max);
    let oracle_consistent = oracle.reward_return >= best_deterministic - 1e-9 && oracle.cost_return <= d + 1e-9;

    let mut passed = 0;
    let mut values = Vec::new();
    for &seed in &cfg.seeds {
        let text = std::fs::read_to_string(seed_dir(&cfg.out_dir, seed).join("checkpoint.json")).unwrap();
        let ckpt: ModelFreeCheckpoint = serde_json::from_str(&text).unwrap();
        let std = ckpt.policy.std()[0];
        let policy: Vec<Vec<f64>> = (0..env.n_states())
            .map(|s| {
                let mean = ckpt.policy.mean(&env.one_hot(s)).unwrap()[0];
                gaussian_bin_probabilities(mean, std, env.n_actions())
            })
            .collect();
        let v = env.evaluate(&policy).unwrap();
        passed += (v.cost <= 1.05 * d && v.reward >= 0.9 * oracle.reward_return) as usize;
        values.push(format!("({:.3}, {:.3})", v.reward, v.cost));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        oracle_consistent && passed >= 4 && secs < 600.0,
        format!(
            "{passed}/5 seeds with J^C <= {:.3} and J^R >= {:.3}; oracle {:.3} (best deterministic {:.3}); (J^R, J^C) per seed {}; {secs:.0}s",
            1.05 * d,
            0.9 * oracle.reward_return,
            oracle.reward_return,
            best_deterministic,
            values.join(" ")
        ),
    )
}

pub fn hazard_config(agent: Agent, beta: f64, out_dir: PathBuf) -> RunConfig {
    let model_based = agent == Agent::MbppoLagrangian;
    RunConfig {
        agent,
        env: EnvConfig::HazardGoal2D(HazardGoalConfig::default()),
        seeds: SEEDS.to_vec(),
        budget: if model_based { MODEL_BASED_BUDGET } else { MODEL_FREE_BUDGET },
        // the model-based agent refits after fewer real episodes and makes up
        // the updates on model rollouts
        episodes_per_epoch: if model_based { 5 } else { 10 },
        ppo: PpoConfig::default(),
        lagrange: LagrangeConfig {
            lambda_init: 1.0,
            lr: 0.05,
            cost_limit: HAZARD_LIMIT,
            beta,
        },
        model_based: ModelBasedSection {
            ensemble: EnsembleConfig {
                hidden: vec![32, 32],
                max_steps: 500,
                ..EnsembleConfig::default()
            },
            model_horizon: 30,
            ..ModelBasedSection::default()
        },
        execution: Execution::default(),
        out_dir,
    }
}

/// Logs of the shared hazard-navigation runs.
pub struct HazardRuns {
    /// Model-based logs per tightening factor, in the order of [`BETAS`].
    pub model_based: Vec<Vec<Vec<LogRow>>>,
    pub model_based_secs: f64,
    pub model_free: Vec<Vec<LogRow>>,
}

impl HazardRuns {
    pub fn run() -> Self {
        let start = Instant::now();
        let model_based = BETAS
            .iter()
            .map(|&b| run(&hazard_config(Agent::MbppoLagrangian, b, scratch(&format!("hazard_mbppo_beta_{b}")))))
            .collect();
        let model_based_secs = start.elapsed().as_secs_f64();
        let model_free = run(&hazard_config(Agent::PpoLagrangian, 1.0, scratch("hazard_ppo_lagrangian")));
        HazardRuns {
            model_based,
            model_based_secs,
            model_free,
        }
    }

    fn paired(&self) -> &[Vec<LogRow>] {
        let i = BETAS.iter().position(|&b| b == PAIRED_BETA).unwrap();
        &self.model_based[i]
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn final_cost(rows: &[LogRow]) -> f64 {
    let outer = outer_rows(rows);
    let tail = &outer[outer.len().saturating_sub(10)..];
    tail.iter().map(|r| r.avg_cost_return).sum::<f64>() / tail.len() as f64
}

pub fn beta_trend(runs: &HazardRuns) -> Outcome {
    let per_beta: Vec<Vec<f64>> = runs
        .model_based
        .iter()
        .map(|seeds| seeds.iter().map(|r| final_cost(r)).collect())
        .collect();
    let means: Vec<f64> = per_beta.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let rho = spearman(&BETAS, &means);
    let (xs, ys): (Vec<f64>, Vec<f64>) = BETAS
        .iter()
        .zip(&per_beta)
        .flat_map(|(&b, c)| c.iter().map(move |&v| (b, v)))
        .unzip();
    let pooled = spearman(&xs, &ys);
    let top = means[BETAS.len() - 1];
    let minutes = runs.model_based_secs / 60.0;
    Outcome::new(
        rho >= 0.9 && top > HAZARD_LIMIT && minutes <= 66.0,
        format!(
            "mean final cost per beta {:?}: {}; Spearman of seed means {rho:.2} (pooled over seeds {pooled:.2}); beta 1 exceeds d = {HAZARD_LIMIT}: {}; {minutes:.1} min",
            BETAS,
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(" / "),
            top > HAZARD_LIMIT
        ),
    )
}

/// Reward the model-free agent converges to: the smoothed reward at the
/// convergence epoch, or the mean of the last 10 epochs if it never settles.
fn converged_reward(rows: &[LogRow]) -> f64 {
    let rewards: Vec<f64> = rows.iter().map(|r| r.avg_reward_return).collect();
    let smooth = moving_average(&rewards, 10);
    match convergence_epoch(&rewards, 10, 0.02, 20) {
        Some(k) => smooth[k],
        None => rewards[rewards.len().saturating_sub(10)..].iter().sum::<f64>() / rewards.len().min(10) as f64,
    }
}

/// First outer-epoch row whose 5-epoch smoothed reward reaches `target`.
fn first_reaching(rows: &[LogRow], target: f64) -> Option<&LogRow> {
    let outer = outer_rows(rows);
    let rewards: Vec<f64> = outer.iter().map(|r| r.avg_reward_return).collect();
    let smooth = moving_average(&rewards, 5);
    outer.into_iter().zip(smooth).find(|(_, v)| *v >= target).map(|(r, _)| r)
}

pub struct Matched {
    pub seed: u64,
    pub target: f64,
    pub model_free: Option<(u64, u64)>,
    pub model_based: Option<(u64, u64)>,
}

pub fn matched_points(runs: &HazardRuns) -> Vec<Matched> {
    SEEDS
        .iter()
        .zip(&runs.model_free)
        .zip(runs.paired())
        .map(|((&seed, mf), mb)| {
            let target = 0.8 * converged_reward(mf);
            let point = |rows| first_reaching(rows, target).map(|r| (r.interactions, r.cumulative_violations));
            Matched {
                seed,
                target,
                model_free: point(mf),
                model_based: point(mb),
            }
        })
        .collect()
}

fn describe(p: Option<(u64, u64)>) -> String {
    p.map_or("never".into(), |(n, v)| format!("{n} steps / {v} violations"))
}

pub fn sample_efficiency(points: &[Matched]) -> Outcome {
    let mut wins = 0;
    let mut lines = Vec::new();
    for m in points {
        let win = matches!((m.model_free, m.model_based), (Some((nf, _)), Some((nb, _))) if 2 * nb <= nf);
        wins += win as usize;
        lines.push(format!(
            "seed {} target {:.3}: ppo-lag {}, mbppo {}",
            m.seed,
            m.target,
            describe(m.model_free).split(" /").next().unwrap(),
            describe(m.model_based).split(" /").next().unwrap()
        ));
    }
    Outcome::new(wins >= 3, format!("{wins}/5 seeds with N_mbppo <= N_ppo-lag / 2; {}", lines.join("; ")))
}

pub fn violation_reduction(points: &[Matched]) -> Outcome {
    let mut wins = 0;
    let mut lines = Vec::new();
    for m in points {
        let win = matches!((m.model_free, m.model_based), (Some((_, vf)), Some((_, vb))) if (vb as f64) <= 0.7 * vf as f64);
        wins += win as usize;
        lines.push(format!(
            "seed {}: ppo-lag {}, mbppo {}",
            m.seed,
            describe(m.model_free).rsplit("/ ").next().unwrap(),
            describe(m.model_based).rsplit("/ ").next().unwrap()
        ));
    }
    Outcome::new(
        wins >= 3,
        format!("{wins}/5 seeds with mbppo violations <= 0.7 x ppo-lag at the matched point; {}", lines.join("; ")),
    )
}

fn log_bytes(cfg: &RunConfig) -> Vec<Vec<u8>> {
    run_experiment(cfg).unwrap();
    cfg.seeds
        .iter()
        .map(|&s| std::fs::read(seed_dir(&cfg.out_dir, s).join("log.csv")).unwrap())
        .collect()
}

pub fn determinism() -> Outcome {
    let mut configs = Vec::new();
    for agent in [Agent::Ppo, Agent::PpoLagrangian] {
        let mut c = chain_config(PathBuf::new());
        c.agent = agent;
        c.budget = 10_000;
        c.seeds = vec![0, 1];
        configs.push(c);
    }
    let mut c = hazard_config(Agent::MbppoLagrangian, 0.5, PathBuf::new());
    c.budget = 4_000;
    c.seeds = vec![0, 1];
    configs.push(c);
    let mut c = hazard_config(Agent::PpoLagrangian, 1.0, PathBuf::new());
    c.budget = 10_000;
    c.seeds = vec![0, 1];
    configs.push(c);

    // A multi-thread pool, so the parallel runs really go through rayon even
    // on a single-core machine.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let mut identical = 0;
    let mut total = 0;
    for (i, cfg) in configs.iter().enumerate() {
        let name = format!("determinism_{i}_{}_{}", cfg.agent.name(), cfg.env.name());
        let (first, second, other_exec) = pool.install(|| {
            let first = log_bytes(&RunConfig {
                out_dir: scratch(&format!("{name}_a")),
                ..cfg.clone()
            });
            let second = log_bytes(&RunConfig {
                out_dir: scratch(&format!("{name}_b")),
                ..cfg.clone()
            });
            let other_exec = log_bytes(&RunConfig {
                out_dir: scratch(&format!("{name}_c")),
                execution: match cfg.execution {
                    Execution::Sequential => Execution::Parallel,
                    Execution::Parallel => Execution::Sequential,
                },
                ..cfg.clone()
            });
            (first, second, other_exec)
        });
        for ((a, b), c) in first.iter().zip(&second).zip(&other_exec) {
            total += 1;
            identical += (a == b && a == c && !a.is_empty()) as usize;
        }
    }
    Outcome::new(
        identical == total,
        format!("{identical}/{total} seed logs byte-identical across reruns and execution modes (ppo, ppo-lag, mbppo)"),
    )
}
