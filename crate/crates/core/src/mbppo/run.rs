use serde::{Deserialize, Serialize};

use super::rollout::{collect_real, estimate_sample_cost, imaginary_rollout, mix_first_pass, InteractionCounter};
use crate::cmdp_env::{CmdpEnv, CmdpSpec};
use crate::dynamics_model::{performance_ratio, DynamicsEnsemble, EnsembleConfig, TransitionDataset};
use crate::lagrangian_ppo::{abort, build_batch, LagrangeConfig, LagrangeState, Learner, PpoConfig};
use crate::metrics::EpochRecord;
use crate::parallel::Execution;
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "mbppo-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MbppoConfig {
    pub ppo: PpoConfig,
    pub lagrange: LagrangeConfig,
    pub ensemble: EnsembleConfig,
    /// Imaginary rollout length `H`, shorter than the environment horizon.
    pub model_horizon: usize,
    /// Real episodes collected per outer epoch.
    pub real_episodes: usize,
    /// Rollouts per inner pass.
    pub imaginary_episodes: usize,
    pub pr_threshold: f64,
    /// Model rollouts per member and policy when computing the ratio.
    pub pr_episodes: usize,
    /// Upper bound on inner passes per outer epoch.
    pub max_inner_passes: usize,
    /// Share of real episodes in the first inner pass after a refit.
    pub real_fraction: f64,
    pub budget: u64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for MbppoConfig {
    fn default() -> Self {
        MbppoConfig {
            ppo: PpoConfig::default(),
            lagrange: LagrangeConfig::default(),
            ensemble: EnsembleConfig::default(),
            model_horizon: 80,
            real_episodes: 10,
            imaginary_episodes: 100,
            pr_threshold: 0.66,
            pr_episodes: 5,
            max_inner_passes: 20,
            real_fraction: 0.05,
            budget: 450_000,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl MbppoConfig {
    pub fn validate(&self, spec: &CmdpSpec) -> Result<()> {
        spec.validate()?;
        self.ppo.validate()?;
        self.ensemble.validate()?;
        if self.model_horizon == 0 || self.model_horizon >= spec.horizon {
            return Err(Error::Config(format!(
                "model horizon must satisfy 0 < H < T = {}, got {}",
                spec.horizon, self.model_horizon
            )));
        }
        if !(0.0..=1.0).contains(&self.pr_threshold) {
            return Err(Error::Config(format!("PR threshold must lie in [0, 1], got {}", self.pr_threshold)));
        }
        if !(0.0..=1.0).contains(&self.real_fraction) {
            return Err(Error::Config(format!("real fraction must lie in [0, 1], got {}", self.real_fraction)));
        }
        if self.real_episodes == 0 || self.imaginary_episodes == 0 || self.pr_episodes == 0 {
            return Err(Error::Config("episode counts must be positive".into()));
        }
        if self.max_inner_passes == 0 {
            return Err(Error::Config("max_inner_passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything needed to resume a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbppoState {
    format: String,
    pub config: MbppoConfig,
    pub learner: Learner,
    pub lagrange: LagrangeState,
    pub ensemble: DynamicsEnsemble,
    pub dataset: TransitionDataset,
    pub rng: Rng,
    pub counter: InteractionCounter,
    pub cumulative_violations: u64,
    pub outer_epoch: usize,
    pub epoch: usize,
    pub records: Vec<EpochRecord>,
}

impl MbppoState {
    pub fn new(env: &dyn CmdpEnv, cfg: &MbppoConfig) -> Result<Self> {
        let spec = env.spec();
        cfg.validate(spec)?;
        let mut model_rng = rng::derive(cfg.seed, 0xe115);
        Ok(MbppoState {
            format: CHECKPOINT_FORMAT.into(),
            config: cfg.clone(),
            learner: Learner::new(env, &cfg.ppo, cfg.seed)?,
            lagrange: LagrangeState::new(&cfg.lagrange)?,
            ensemble: DynamicsEnsemble::new(spec.state_dim, spec.action_dim, &cfg.ensemble, &mut model_rng)?,
            dataset: TransitionDataset::new(spec.state_dim, spec.action_dim),
            rng: rng::derive(cfg.seed, 0x7ea1),
            counter: InteractionCounter::default(),
            cumulative_violations: 0,
            outer_epoch: 0,
            epoch: 0,
            records: Vec::new(),
        })
    }

    pub fn check(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown checkpoint format {:?}", self.format)));
        }
        self.ensemble.check()
    }

    pub fn interactions(&self) -> u64 {
        self.counter.get()
    }

    pub fn finished(&self) -> bool {
        self.counter.get() >= self.config.budget
    }

    /// One outer epoch: real collection, model refit and the gated inner loop.
    pub fn outer_step(&mut self, env: &dyn CmdpEnv) -> Result<()> {
        let cfg = self.config.clone();
        let spec = env.spec();
        let exec = cfg.execution;
        let adv = cfg.ppo.advantage_config(spec.gamma);

        let (real, stats) = collect_real(
            env,
            &self.learner.policy,
            cfg.real_episodes,
            &mut self.rng,
            exec,
            &mut self.counter,
        )?;
        self.dataset.extend_from_episodes(&real)?;
        self.cumulative_violations += stats.violations;
        let epoch_at_start = self.epoch;
        self.ensemble
            .train(&self.dataset, &cfg.ensemble, &mut self.rng, exec)
            .map_err(|e| abort(epoch_at_start, e))?;

        let mut pass = 0;
        loop {
            let epoch = self.epoch;
            let starts: Vec<Vec<f64>> = (0..cfg.imaginary_episodes)
                .map(|_| env.sample_initial(&mut self.rng))
                .collect();
            let pr = (|| -> Result<f64> {
                let imaginary = imaginary_rollout(
                    &self.ensemble,
                    env,
                    &self.learner.policy,
                    &starts,
                    cfg.model_horizon,
                    &mut self.rng,
                    exec,
                )?;
                let sample_cost = estimate_sample_cost(&imaginary, spec.gamma)?;
                let episodes = if pass == 0 {
                    mix_first_pass(&real, imaginary, cfg.real_fraction, cfg.model_horizon, &mut self.rng)?
                } else {
                    imaginary
                };
                self.lagrange.update(sample_cost)?;
                let old = self.learner.policy.clone();
                let batch = build_batch(env, &episodes, &self.learner.policy, &self.learner.critics, &adv)?;
                self.learner.update(&batch, self.lagrange.lambda(), &cfg.ppo, &mut self.rng)?;
                let pr = performance_ratio(
                    &self.ensemble,
                    env,
                    &self.learner.policy,
                    &old,
                    spec.gamma,
                    spec.horizon,
                    cfg.pr_episodes,
                    &mut self.rng,
                    exec,
                )?;
                self.records.push(EpochRecord {
                    epoch,
                    outer_epoch: self.outer_epoch,
                    pass,
                    interactions: self.counter.get(),
                    avg_reward_return: stats.avg_reward_return,
                    avg_cost_return: stats.avg_cost_return,
                    avg_episode_cost: stats.avg_episode_cost,
                    lambda: self.lagrange.lambda(),
                    sample_cost: Some(sample_cost),
                    epoch_violations: if pass == 0 { stats.violations } else { 0 },
                    cumulative_violations: self.cumulative_violations,
                    performance_ratio: Some(pr),
                });
                Ok(pr)
            })()
            .map_err(|e| abort(epoch, e))?;
            self.epoch += 1;
            pass += 1;
            if !(pr > cfg.pr_threshold) || pass >= cfg.max_inner_passes {
                break;
            }
        }
        self.outer_epoch += 1;
        Ok(())
    }
}

/// Run to the interaction budget from a fresh start.
pub fn run(env: &dyn CmdpEnv, cfg: &MbppoConfig) -> Result<MbppoState> {
    run_with(env, MbppoState::new(env, cfg)?, &mut |_| Ok(true))
}

/// Continue `state` to its budget. `after_epoch` sees the state after every
/// outer epoch and may stop the run early by returning `false`.
pub fn run_with(
    env: &dyn CmdpEnv,
    mut state: MbppoState,
    after_epoch: &mut dyn FnMut(&MbppoState) -> Result<bool>,
) -> Result<MbppoState> {
    state.check()?;
    state.config.validate(env.spec())?;
    while !state.finished() {
        state.outer_step(env)?;
        if !after_epoch(&state)? {
            break;
        }
    }
    Ok(state)
}
