use super::ensemble::DynamicsEnsemble;
use super::member::GaussianDynamicsMember;
use crate::cmdp_env::{clip_action, CmdpEnv};
use crate::lagrangian_ppo::GaussianPolicy;
use crate::parallel::{self, Execution};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Anything that can draw a next state.
pub trait TransitionModel: Sync {
    fn sample_next(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

impl TransitionModel for GaussianDynamicsMember {
    fn sample_next(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        GaussianDynamicsMember::sample_next(self, state, action, rng)
    }
}

/// Discounted reward return of one `horizon`-step rollout inside `model`,
/// starting from the environment's initial-state distribution. The stream is
/// seeded by `seed`, and its consumption does not depend on the policy, so two
/// policies rolled out with the same seed see the same noise.
pub fn model_return(
    model: &dyn TransitionModel,
    env: &dyn CmdpEnv,
    policy: &GaussianPolicy,
    gamma: f64,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = rng::from_seed(seed);
    let mut state = env.sample_initial(&mut rng);
    let mut ret = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon {
        let (raw, _) = policy.sample(&env.observe(&state), &mut rng)?;
        let (action, _) = clip_action(env.spec(), &raw)?;
        let next = model.sample_next(&state, &action, &mut rng)?;
        ret += discount * env.reward(&state, &action, &next);
        discount *= gamma;
        state = next;
    }
    Ok(ret)
}

/// Fraction of `models` in which `new` has a strictly higher mean model
/// return than `old`, each averaged over `episodes` rollouts that share
/// their random streams between the two policies.
#[allow(clippy::too_many_arguments)]
pub fn performance_ratio_over(
    models: &[&dyn TransitionModel],
    env: &dyn CmdpEnv,
    new: &GaussianPolicy,
    old: &GaussianPolicy,
    gamma: f64,
    horizon: usize,
    episodes: usize,
    rng: &mut Rng,
    exec: Execution,
) -> Result<f64> {
    if models.is_empty() || episodes == 0 {
        return Err(Error::InvalidInput("performance ratio needs models and episodes".into()));
    }
    let seeds = rng::child_seeds(rng, episodes);
    let improved = parallel::map_range(exec, models.len(), |i| -> Result<bool> {
        let mut z_new = 0.0;
        let mut z_old = 0.0;
        for &s in &seeds {
            z_new += model_return(models[i], env, new, gamma, horizon, s)?;
            z_old += model_return(models[i], env, old, gamma, horizon, s)?;
        }
        Ok(z_new > z_old)
    });
    let mut count = 0;
    for r in improved {
        count += r? as usize;
    }
    Ok(count as f64 / models.len() as f64)
}

/// Performance ratio over the ensemble's elite members.
#[allow(clippy::too_many_arguments)]
pub fn performance_ratio(
    ensemble: &DynamicsEnsemble,
    env: &dyn CmdpEnv,
    new: &GaussianPolicy,
    old: &GaussianPolicy,
    gamma: f64,
    horizon: usize,
    episodes: usize,
    rng: &mut Rng,
    exec: Execution,
) -> Result<f64> {
    if !ensemble.is_trained() {
        return Err(Error::Untrained);
    }
    let elites = ensemble.elite_members();
    let models: Vec<&dyn TransitionModel> = elites.iter().map(|m| *m as &dyn TransitionModel).collect();
    performance_ratio_over(&models, env, new, old, gamma, horizon, episodes, rng, exec)
}
