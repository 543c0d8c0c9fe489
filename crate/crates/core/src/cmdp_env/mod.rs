//! Constrained MDP environments.
//!
//! Environments are immutable descriptions; the caller owns the state vector
//! and the random stream, which makes every trajectory a pure function of
//! `(seed, actions)` and lets many episodes run side by side.

mod circle_track;
mod discrete;
mod hazard_goal;

pub use circle_track::{CircleTrack, CircleTrackConfig};
pub use discrete::{
    gaussian_bin_probabilities, DiscreteCmdp, DiscretePolicy, OracleSolution, PolicyValue,
};
pub use hazard_goal::{HazardGoal2D, HazardGoalConfig};

use serde::{Deserialize, Serialize};

use crate::{rng::Rng, Error, Result};

/// Static description of a CMDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmdpSpec {
    pub state_dim: usize,
    /// Dimension of the policy/critic input produced by [`CmdpEnv::observe`].
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Per-dimension action bounds `[low, high]`.
    pub action_low: f64,
    pub action_high: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl CmdpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "discount must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// A CMDP whose reward and cost are known functions of `(s, a, s')`.
///
/// The cost must be non-negative. Reward and cost are exposed separately from
/// the transition so that model-generated states can be scored exactly.
pub trait CmdpEnv: Send + Sync {
    fn name(&self) -> &str;

    fn spec(&self) -> &CmdpSpec;

    /// Draw an initial state from the initial-state distribution.
    fn sample_initial(&self, rng: &mut Rng) -> Vec<f64>;

    /// Sample `s'` given a state and an in-bounds action.
    fn transition(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Vec<f64>;

    fn reward(&self, state: &[f64], action: &[f64], next: &[f64]) -> f64;

    fn cost(&self, state: &[f64], action: &[f64], next: &[f64]) -> f64;

    fn is_terminal(&self, state: &[f64]) -> bool;

    /// Policy input for a state.
    fn observe(&self, state: &[f64]) -> Vec<f64>;
}

/// One environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// The action actually applied, after clipping to the bounds.
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
    /// Whether the requested action had to be clipped.
    pub clipped: bool,
}

/// Which signal of a transition to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Reward,
    Cost,
}

impl Channel {
    #[inline]
    pub fn of(self, t: &Transition) -> f64 {
        match self {
            Channel::Reward => t.reward,
            Channel::Cost => t.cost,
        }
    }
}

/// Initial state drawn with a fresh stream seeded by `seed`.
pub fn reset(env: &dyn CmdpEnv, seed: u64) -> Vec<f64> {
    env.sample_initial(&mut crate::rng::from_seed(seed))
}

/// Clip `action` into the declared bounds.
pub fn clip_action(spec: &CmdpSpec, action: &[f64]) -> Result<(Vec<f64>, bool)> {
    if action.len() != spec.action_dim {
        return Err(Error::Shape {
            context: "action",
            expected: spec.action_dim,
            actual: action.len(),
        });
    }
    if let Some(&a) = action.iter().find(|a| !a.is_finite()) {
        return Err(Error::non_finite("action", a));
    }
    let mut clipped = false;
    let out = action
        .iter()
        .map(|&a| {
            let c = a.clamp(spec.action_low, spec.action_high);
            clipped |= c != a;
            c
        })
        .collect();
    Ok((out, clipped))
}

/// Advance `state` by one step under `action`.
pub fn step(env: &dyn CmdpEnv, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<Transition> {
    let spec = env.spec();
    if state.len() != spec.state_dim {
        return Err(Error::Shape {
            context: "state",
            expected: spec.state_dim,
            actual: state.len(),
        });
    }
    let (action, clipped) = clip_action(spec, action)?;
    let next_state = env.transition(state, &action, rng);
    let reward = env.reward(state, &action, &next_state);
    let cost = env.cost(state, &action, &next_state);
    let done = env.is_terminal(&next_state);
    Ok(Transition {
        state: state.to_vec(),
        action,
        next_state,
        reward,
        cost,
        done,
        clipped,
    })
}

/// Discounted return `sum_t gamma^t x_{t+1}` of one channel.
pub fn episode_return(trajectory: &[Transition], gamma: f64, channel: Channel) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for t in trajectory {
        total += discount * channel.of(t);
        discount *= gamma;
    }
    total
}

/// Build an environment from its registry name.
pub fn by_name(name: &str, layout_seed: u64) -> Result<Box<dyn CmdpEnv>> {
    match name {
        "hazard_goal_2d" => Ok(Box::new(HazardGoal2D::new(HazardGoalConfig {
            layout_seed,
            ..HazardGoalConfig::default()
        })?)),
        "circle_track" => Ok(Box::new(CircleTrack::new(CircleTrackConfig::default())?)),
        "chain3" => Ok(Box::new(DiscreteCmdp::chain3())),
        other => Err(Error::Config(format!(
            "unknown environment {other:?} (expected hazard_goal_2d, circle_track or chain3)"
        ))),
    }
}
