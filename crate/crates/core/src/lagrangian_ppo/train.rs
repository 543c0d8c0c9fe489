use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::lagrange::{LagrangeConfig, LagrangeState};
use super::objective::{lagrangian_policy_loss, CostSurrogate, PolicyMinibatch};
use super::policy::{GaussianPolicy, PolicyOptimizer, LOG_STD_MAX, LOG_STD_MIN};
use crate::cmdp_env::{self, CmdpEnv};
use crate::estimation::{
    critic_update, AdvantageConfig, CriticOptimizers, CriticPair, Episode, Provenance, RolloutBatch,
};
use crate::metrics::{EpisodeStats, EpochRecord};
use crate::parallel::{self, Execution};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    /// Unconstrained PPO: the multiplier stays at 0.
    Ppo,
    PpoLagrangian,
    MbppoLagrangian,
}

impl Agent {
    pub fn name(self) -> &'static str {
        match self {
            Agent::Ppo => "ppo",
            Agent::PpoLagrangian => "ppo_lagrangian",
            Agent::MbppoLagrangian => "mbppo_lagrangian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub clip_eps: f64,
    /// Actor and critic gradient steps per batch.
    pub update_iters: usize,
    /// Samples per gradient step; 0 uses the whole batch.
    pub minibatch_size: usize,
    pub gae_lambda: f64,
    pub normalize_reward_adv: bool,
    /// Divide the actor loss by `1 + lambda`.
    pub normalize_loss: bool,
    pub init_log_std: f64,
    /// Weight of the policy entropy bonus subtracted from the actor loss.
    pub entropy_coef: f64,
    /// Stop actor steps early once the approximate KL exceeds this.
    pub target_kl: Option<f64>,
    pub cost_surrogate: CostSurrogate,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            clip_eps: 0.2,
            update_iters: 40,
            minibatch_size: 256,
            gae_lambda: 0.95,
            normalize_reward_adv: true,
            normalize_loss: true,
            init_log_std: 0.6f64.ln(),
            entropy_coef: 0.0,
            target_kl: None,
            cost_surrogate: CostSurrogate::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config(format!("clip epsilon must lie in (0, 1), got {}", self.clip_eps)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config(format!("GAE lambda must lie in [0, 1], got {}", self.gae_lambda)));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.update_iters == 0 {
            return Err(Error::Config("update_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn advantage_config(&self, gamma: f64) -> AdvantageConfig {
        AdvantageConfig {
            gamma,
            gae_lambda: self.gae_lambda,
            normalize_reward: self.normalize_reward_adv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelFreeConfig {
    pub agent: Agent,
    pub ppo: PpoConfig,
    pub lagrange: LagrangeConfig,
    pub episodes_per_epoch: usize,
    /// Real environment steps to consume.
    pub budget: u64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for ModelFreeConfig {
    fn default() -> Self {
        ModelFreeConfig {
            agent: Agent::PpoLagrangian,
            ppo: PpoConfig::default(),
            lagrange: LagrangeConfig {
                beta: 1.0,
                ..LagrangeConfig::default()
            },
            episodes_per_epoch: 10,
            budget: 100_000,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Statistics of one call to [`ppo_update`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub reward_surrogate: f64,
    pub cost_surrogate: f64,
    pub value_loss_reward: f64,
    pub value_loss_cost: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub actor_steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: GaussianPolicy,
    pub critics: CriticPair,
    pub lagrange: LagrangeState,
    pub records: Vec<EpochRecord>,
    pub interactions: u64,
}

/// Roll out one real episode of at most the environment horizon.
pub fn run_episode(env: &dyn CmdpEnv, policy: &GaussianPolicy, rng: &mut Rng) -> Result<Episode> {
    let horizon = env.spec().horizon;
    let mut state = env.sample_initial(rng);
    let mut transitions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let (action, _) = policy.sample(&env.observe(&state), rng)?;
        let t = cmdp_env::step(env, &state, &action, rng)?;
        state = t.next_state.clone();
        let done = t.done;
        transitions.push(t);
        if done {
            break;
        }
    }
    Ok(Episode::new(transitions, Provenance::Real))
}

/// `n` real episodes, each on its own stream split from `rng`, so results do
/// not depend on the execution mode.
pub fn collect_episodes(
    env: &dyn CmdpEnv,
    policy: &GaussianPolicy,
    n: usize,
    rng: &mut Rng,
    exec: Execution,
) -> Result<Vec<Episode>> {
    let seeds = rng::child_seeds(rng, n);
    parallel::map(exec, seeds, |s| run_episode(env, policy, &mut rng::from_seed(s)))
        .into_iter()
        .collect()
}

/// Assemble episodes into a batch and record the current policy's
/// log-probabilities of the taken actions.
pub fn build_batch(
    env: &dyn CmdpEnv,
    episodes: &[Episode],
    policy: &GaussianPolicy,
    critics: &CriticPair,
    cfg: &AdvantageConfig,
) -> Result<RolloutBatch> {
    let mut batch = RolloutBatch::assemble(env, episodes, critics, cfg)?;
    batch.log_probs = policy.log_prob_batch(batch.obs.view(), batch.actions.view())?;
    Ok(batch)
}

/// `update_iters` actor steps on the Lagrangian loss at fixed `lambda`,
/// followed by the same number of critic steps.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    critics: &mut CriticPair,
    actor_opt: &mut PolicyOptimizer,
    critic_opt: &mut CriticOptimizers,
    batch: &RolloutBatch,
    lambda: f64,
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    let n = batch.len();
    let mb = if cfg.minibatch_size == 0 || cfg.minibatch_size >= n {
        n
    } else {
        cfg.minibatch_size
    };
    let full = PolicyMinibatch::from_batch(batch, None);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.update_iters {
        let mut loss = if mb == n {
            lagrangian_policy_loss(policy, &full, lambda, cfg.clip_eps, cfg.normalize_loss, cfg.cost_surrogate)?
        } else {
            order.shuffle(rng);
            let part = PolicyMinibatch::from_batch(batch, Some(&order[..mb]));
            lagrangian_policy_loss(policy, &part, lambda, cfg.clip_eps, cfg.normalize_loss, cfg.cost_surrogate)?
        };
        stats.policy_loss = loss.loss;
        stats.reward_surrogate = loss.reward_surrogate;
        stats.cost_surrogate = loss.cost_surrogate;
        stats.clip_fraction = loss.clip_fraction;
        stats.approx_kl = loss.approx_kl;
        if let Some(kl) = cfg.target_kl {
            if loss.approx_kl > 1.5 * kl {
                break;
            }
        }
        if cfg.entropy_coef != 0.0 {
            // Gaussian entropy grows by one per unit of log-std
            for (g, raw) in loss.grad_log_std.iter_mut().zip(&policy.log_std) {
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(raw) {
                    *g -= cfg.entropy_coef;
                }
            }
        }
        actor_opt.step(policy, &loss.grad_trunk, &loss.grad_log_std)?;
        stats.actor_steps += 1;
    }
    let (lr, lc) = critic_update(critics, batch, critic_opt, cfg.update_iters, mb, rng)?;
    stats.value_loss_reward = lr;
    stats.value_loss_cost = lc;
    Ok(stats)
}

/// Actor, critics and their optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub policy: GaussianPolicy,
    pub critics: CriticPair,
    pub actor_opt: PolicyOptimizer,
    pub critic_opt: CriticOptimizers,
}

impl Learner {
    pub fn new(env: &dyn CmdpEnv, cfg: &PpoConfig, seed: u64) -> Result<Self> {
        let spec = env.spec();
        let mut init = rng::derive(seed, 0x1417);
        let policy =
            GaussianPolicy::new(spec.obs_dim, &cfg.actor_hidden, spec.action_dim, cfg.init_log_std, &mut init)?;
        let critics = CriticPair::new(spec.obs_dim, &cfg.critic_hidden, &mut init)?;
        Ok(Learner {
            actor_opt: PolicyOptimizer::new(&policy, cfg.actor_lr),
            critic_opt: critics.optimizers(cfg.critic_lr),
            policy,
            critics,
        })
    }
}

impl Learner {
    pub fn update(&mut self, batch: &RolloutBatch, lambda: f64, cfg: &PpoConfig, rng: &mut Rng) -> Result<UpdateStats> {
        ppo_update(
            &mut self.policy,
            &mut self.critics,
            &mut self.actor_opt,
            &mut self.critic_opt,
            batch,
            lambda,
            cfg,
            rng,
        )
    }
}

pub(crate) fn abort(epoch: usize, err: Error) -> Error {
    match err {
        Error::NonFinite { context, value } => Error::TrainingAborted {
            epoch,
            reason: format!("non-finite {context} ({value})"),
        },
        other => other,
    }
}

/// Model-free PPO or PPO-Lagrangian until the interaction budget is spent.
/// Each epoch collects fresh episodes, updates the multiplier once from their
/// mean discounted cost, then runs the actor and critic steps.
pub fn train_model_free(env: &dyn CmdpEnv, cfg: &ModelFreeConfig) -> Result<TrainOutcome> {
    train_model_free_with(env, cfg, &mut |_| Ok(true))
}

/// Like [`train_model_free`], calling `after_epoch` with every new record.
/// Returning `false` stops the run after that epoch.
pub fn train_model_free_with(
    env: &dyn CmdpEnv,
    cfg: &ModelFreeConfig,
    after_epoch: &mut dyn FnMut(&EpochRecord) -> Result<bool>,
) -> Result<TrainOutcome> {
    let spec = env.spec();
    spec.validate()?;
    cfg.ppo.validate()?;
    if cfg.agent == Agent::MbppoLagrangian {
        return Err(Error::Config("train_model_free cannot run the model-based agent".into()));
    }
    if cfg.episodes_per_epoch == 0 {
        return Err(Error::Config("episodes_per_epoch must be at least 1".into()));
    }
    let constrained = cfg.agent == Agent::PpoLagrangian;
    let mut lagrange_cfg = cfg.lagrange.clone();
    if !constrained {
        lagrange_cfg.lambda_init = 0.0;
    }
    let mut lagrange = LagrangeState::new(&lagrange_cfg)?;
    let mut learner = Learner::new(env, &cfg.ppo, cfg.seed)?;
    let mut rng = rng::derive(cfg.seed, 0x7ea1);
    let adv = cfg.ppo.advantage_config(spec.gamma);

    let mut records = Vec::new();
    let mut interactions = 0u64;
    let mut cumulative = 0u64;
    let mut epoch = 0;
    while interactions < cfg.budget {
        let episodes = collect_episodes(env, &learner.policy, cfg.episodes_per_epoch, &mut rng, cfg.execution)?;
        let stats = EpisodeStats::from_episodes(&episodes, spec.gamma);
        interactions += stats.steps;
        cumulative += stats.violations;

        let step = (|| -> Result<()> {
            let batch = build_batch(env, &episodes, &learner.policy, &learner.critics, &adv)?;
            if constrained {
                lagrange.update(stats.avg_cost_return)?;
            }
            learner.update(&batch, lagrange.lambda(), &cfg.ppo, &mut rng)?;
            Ok(())
        })();
        step.map_err(|e| abort(epoch, e))?;

        records.push(EpochRecord {
            epoch,
            outer_epoch: epoch,
            pass: 0,
            interactions,
            avg_reward_return: stats.avg_reward_return,
            avg_cost_return: stats.avg_cost_return,
            avg_episode_cost: stats.avg_episode_cost,
            lambda: lagrange.lambda(),
            sample_cost: None,
            epoch_violations: stats.violations,
            cumulative_violations: cumulative,
            performance_ratio: None,
        });
        epoch += 1;
        if !after_epoch(&records[records.len() - 1])? {
            break;
        }
    }
    Ok(TrainOutcome {
        policy: learner.policy,
        critics: learner.critics,
        lagrange,
        records,
        interactions,
    })
}
