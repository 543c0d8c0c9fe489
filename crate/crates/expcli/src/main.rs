use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mbppol::lagrangian_ppo::Agent;
use mbppol_cli::{aggregate, normalize_dir, run_experiment, EnvConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "mbppol", about = "Train and evaluate constrained RL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every seed of a configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// ppo, ppo_lagrangian or mbppo_lagrangian.
        #[arg(long)]
        agent: Option<String>,
        /// hazard_goal_2d, circle_track or chain3, with default parameters.
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild aggregate.json from the seed summaries in a run directory.
    Aggregate {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Divide cumulative violations by those of an unconstrained PPO run.
    BaselineNormalize {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        baseline_dir: PathBuf,
    },
}

fn parse_agent(name: &str) -> Result<Agent> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .with_context(|| format!("unknown agent {name:?}; expected ppo, ppo_lagrangian or mbppo_lagrangian"))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            agent,
            env,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(a) = agent {
                cfg.agent = parse_agent(&a)?;
            }
            if let Some(e) = env {
                cfg.env = EnvConfig::by_name(&e)?;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            let agg = &report.aggregate;
            for s in &agg.seeds {
                println!(
                    "seed {}: reward {:.4} cost {:.4} feasible {} violations {} interactions {}",
                    s.seed, s.final_reward, s.final_cost, s.feasible, s.cumulative_violations, s.interactions
                );
            }
            for f in &report.failures {
                eprintln!("seed {} failed: {}", f.seed, f.error);
            }
            println!("results in {}", report.dir.display());
            Ok(if report.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Aggregate { dir } => {
            let agg = aggregate(&dir)?;
            println!("{}", serde_json::to_string_pretty(&agg)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::BaselineNormalize { dir, baseline_dir } => {
            let out = normalize_dir(&dir, &baseline_dir)?;
            for s in &out.seeds {
                let last = s.cumulative_violations.last().copied().unwrap_or(0.0);
                println!("seed {}: final normalized violations {:.4}", s.seed, last);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
