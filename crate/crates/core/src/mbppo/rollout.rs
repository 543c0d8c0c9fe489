use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cmdp_env::{clip_action, Channel, CmdpEnv, Transition};
use crate::dynamics_model::DynamicsEnsemble;
use crate::estimation::{Episode, Provenance};
use crate::lagrangian_ppo::{collect_episodes, GaussianPolicy};
use crate::metrics::EpisodeStats;
use crate::parallel::{self, Execution};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Real environment steps consumed. Only [`collect_real`] advances it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionCounter(u64);

impl InteractionCounter {
    pub fn get(self) -> u64 {
        self.0
    }
}

/// Run `episodes` real episodes and advance the counter by the number of
/// steps taken.
pub fn collect_real(
    env: &dyn CmdpEnv,
    policy: &GaussianPolicy,
    episodes: usize,
    rng: &mut Rng,
    exec: Execution,
    counter: &mut InteractionCounter,
) -> Result<(Vec<Episode>, EpisodeStats)> {
    let eps = collect_episodes(env, policy, episodes, rng, exec)?;
    let stats = EpisodeStats::from_episodes(&eps, env.spec().gamma);
    counter.0 += stats.steps;
    Ok((eps, stats))
}

/// One `horizon`-step rollout per initial state inside the ensemble. Reward
/// and cost are scored by the environment's functions on predicted states;
/// the model has no terminal predicate.
pub fn imaginary_rollout(
    ensemble: &DynamicsEnsemble,
    env: &dyn CmdpEnv,
    policy: &GaussianPolicy,
    initial_states: &[Vec<f64>],
    horizon: usize,
    rng: &mut Rng,
    exec: Execution,
) -> Result<Vec<Episode>> {
    if !ensemble.is_trained() {
        return Err(Error::Untrained);
    }
    let seeds = rng::child_seeds(rng, initial_states.len());
    let jobs: Vec<(&Vec<f64>, u64)> = initial_states.iter().zip(seeds).collect();
    parallel::map(exec, jobs, |(s0, seed)| {
        let mut r = rng::from_seed(seed);
        let mut state = s0.clone();
        let mut transitions = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let (raw, _) = policy.sample(&env.observe(&state), &mut r)?;
            let (action, clipped) = clip_action(env.spec(), &raw)?;
            let next = ensemble.sample_next(&state, &action, &mut r)?;
            if let Some(&v) = next.iter().find(|v| !v.is_finite()) {
                return Err(Error::non_finite("model state", v));
            }
            transitions.push(Transition {
                reward: env.reward(&state, &action, &next),
                cost: env.cost(&state, &action, &next),
                state,
                action,
                next_state: next.clone(),
                done: false,
                clipped,
            });
            state = next;
        }
        Ok(Episode::new(transitions, Provenance::Imaginary))
    })
    .into_iter()
    .collect()
}

/// Mean discounted cost `sum_p gamma^p c_{p+1}` over the imaginary episodes
/// of `episodes`; real episodes are ignored.
pub fn estimate_sample_cost(episodes: &[Episode], gamma: f64) -> Result<f64> {
    let costs: Vec<f64> = episodes
        .iter()
        .filter(|e| e.provenance == Provenance::Imaginary)
        .map(|e| e.discounted_return(gamma, Channel::Cost))
        .collect();
    if costs.is_empty() {
        return Err(Error::InvalidInput("no imaginary episodes to estimate cost from".into()));
    }
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

/// Replace a `real_fraction` share (by episode count) of the imaginary batch
/// with random `horizon`-step windows cut from real episodes.
pub fn mix_first_pass(
    real: &[Episode],
    imaginary: Vec<Episode>,
    real_fraction: f64,
    horizon: usize,
    rng: &mut Rng,
) -> Result<Vec<Episode>> {
    if !(0.0..=1.0).contains(&real_fraction) {
        return Err(Error::InvalidInput(format!("real fraction must lie in [0, 1], got {real_fraction}")));
    }
    let total = imaginary.len();
    let usable: Vec<&Episode> = real.iter().filter(|e| !e.is_empty()).collect();
    let n_real = if usable.is_empty() {
        0
    } else {
        (real_fraction * total as f64).round() as usize
    };
    let mut out: Vec<Episode> = imaginary.into_iter().take(total - n_real).collect();
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.shuffle(rng);
    for k in 0..n_real {
        let ep = usable[order[k % order.len()]];
        let len = ep.len().min(horizon);
        let start = rng.gen_range(0..=ep.len() - len);
        out.push(Episode::new(ep.transitions[start..start + len].to_vec(), Provenance::Real));
    }
    Ok(out)
}
