//! Seeded multi-run orchestration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mbppol::cmdp_env::CmdpEnv;
use mbppol::estimation::CriticPair;
use mbppol::lagrangian_ppo::{train_model_free_with, Agent, GaussianPolicy, LagrangeState};
use mbppol::mbppo::{run_with, MbppoState};
use mbppol::metrics::EpochRecord;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::log::{write_log, write_timing, LogRow};
use crate::report::{Aggregate, SeedSummary};
use crate::{write_json, CliError, Result};

pub const MODEL_FREE_CHECKPOINT: &str = "model-free-checkpoint-v1";

/// Final state of a model-free run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFreeCheckpoint {
    pub format: String,
    pub policy: GaussianPolicy,
    pub critics: CriticPair,
    pub lagrange: LagrangeState,
    pub interactions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub aggregate: Aggregate,
    pub failures: Vec<SeedFailure>,
}

pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}"))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Write through a temporary file so a crash never leaves a torn checkpoint.
fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    write_json(&tmp, value)?;
    std::fs::rename(&tmp, path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

struct Recorder {
    start: Instant,
    rows: Vec<LogRow>,
    seconds: Vec<f64>,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            start: Instant::now(),
            rows: Vec::new(),
            seconds: Vec::new(),
        }
    }

    fn push(&mut self, records: &[EpochRecord]) {
        let t = self.start.elapsed().as_secs_f64();
        for r in records {
            self.rows.push(r.into());
            self.seconds.push(t);
        }
    }

    fn flush(&self, dir: &Path) -> Result<()> {
        write_log(&dir.join("log.csv"), &self.rows)?;
        write_timing(&dir.join("timing.csv"), &self.seconds)
    }
}

fn train(cfg: &RunConfig, env: &dyn CmdpEnv, seed: u64, dir: &Path, rec: &mut Recorder) -> Result<()> {
    let checkpoint = dir.join("checkpoint.json");
    match cfg.agent {
        Agent::MbppoLagrangian => {
            let state = MbppoState::new(env, &cfg.model_based(seed))?;
            let mut seen = 0;
            let mut io_error = None;
            let result = run_with(env, state, &mut |s: &MbppoState| {
                rec.push(&s.records[seen..]);
                seen = s.records.len();
                if let Err(e) = write_json_atomic(&checkpoint, s) {
                    io_error = Some(e);
                    return Ok(false);
                }
                Ok(true)
            });
            if let Some(e) = io_error {
                return Err(e);
            }
            result?;
        }
        Agent::Ppo | Agent::PpoLagrangian => {
            let out = train_model_free_with(env, &cfg.model_free(seed), &mut |r| {
                rec.push(std::slice::from_ref(r));
                Ok(true)
            })?;
            let ckpt = ModelFreeCheckpoint {
                format: MODEL_FREE_CHECKPOINT.into(),
                policy: out.policy,
                critics: out.critics,
                lagrange: out.lagrange,
                interactions: out.interactions,
            };
            write_json_atomic(&checkpoint, &ckpt)?;
        }
    }
    Ok(())
}

/// Train one seed into `dir`. The log is written even when training fails
/// part way.
pub fn run_seed(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<SeedSummary> {
    create_dir(dir)?;
    let snapshot = RunConfig {
        seeds: vec![seed],
        out_dir: dir.to_owned(),
        ..cfg.clone()
    };
    write_json(&dir.join("config.json"), &snapshot)?;
    let env = cfg.env.build()?;
    let mut rec = Recorder::new();
    let trained = train(cfg, env.as_ref(), seed, dir, &mut rec);
    rec.flush(dir)?;
    trained?;
    let summary = SeedSummary::from_log(
        cfg.agent.name(),
        cfg.env.name(),
        seed,
        cfg.lagrange.cost_limit,
        &rec.rows,
    );
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Run every seed of `cfg` under `cfg.out_dir`, then write `aggregate.json`.
/// Seeds that fail are listed in `failures.json` and do not stop the others.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    create_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("config.json"), cfg)?;
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for &seed in &cfg.seeds {
        match run_seed(cfg, seed, &seed_dir(&cfg.out_dir, seed)) {
            Ok(s) => summaries.push(s),
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let aggregate = Aggregate::of(summaries);
    write_json(&cfg.out_dir.join("aggregate.json"), &aggregate)?;
    let failures_path = cfg.out_dir.join("failures.json");
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|source| CliError::Io {
                path: failures_path.clone(),
                source,
            })?;
        }
    } else {
        write_json(&failures_path, &failures)?;
    }
    Ok(ExperimentReport {
        dir: cfg.out_dir.clone(),
        aggregate,
        failures,
    })
}
