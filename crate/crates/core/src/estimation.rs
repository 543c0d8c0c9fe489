//! Returns-to-go, temporal differences, GAE and the reward/cost critics.
//!
//! Reward and cost go through the exact same functions; [`Channel`] only
//! selects which signal is read from a transition.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cmdp_env::{Channel, CmdpEnv, Transition};
use crate::diffnum::{gradient, Activation, AdamState, Mlp};
use crate::rng::Rng;
use crate::{Error, Result};

/// Where an episode came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Imaginary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub provenance: Provenance,
}

impl Episode {
    pub fn new(transitions: Vec<Transition>, provenance: Provenance) -> Self {
        Episode {
            transitions,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// True when the last transition reached a terminal state (as opposed to
    /// being cut by the horizon).
    pub fn terminated(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.done)
    }

    pub fn signal(&self, channel: Channel) -> Vec<f64> {
        self.transitions.iter().map(|t| channel.of(t)).collect()
    }

    pub fn discounted_return(&self, gamma: f64, channel: Channel) -> f64 {
        crate::cmdp_env::episode_return(&self.transitions, gamma, channel)
    }

    /// Number of steps with unit cost.
    pub fn violations(&self) -> usize {
        self.transitions.iter().filter(|t| t.cost >= 1.0).count()
    }

    /// States `s_0..s_T`, including the final next-state.
    pub fn states(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.transitions.iter().map(|t| t.state.as_slice()).collect();
        if let Some(last) = self.transitions.last() {
            out.push(&last.next_state);
        }
        out
    }
}

/// Discounted tail sums `x_{t+1} + gamma x_{t+2} + ...`, with `tail_value`
/// added (discounted) past the last step. `tail_value = 0` gives the plain
/// truncated returns-to-go.
pub fn returns_to_go(signal: &[f64], gamma: f64, tail_value: f64) -> Vec<f64> {
    let mut out = vec![0.0; signal.len()];
    let mut acc = tail_value;
    for t in (0..signal.len()).rev() {
        acc = signal[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// One-step TD residuals `x_{t+1} + gamma V(s_{t+1}) - V(s_t)`.
///
/// `values` holds `V(s_0) .. V(s_T)`; pass `V(s_T) = 0` for a terminal end.
pub fn td_residuals(signal: &[f64], values: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if values.len() != signal.len() + 1 {
        return Err(Error::Shape {
            context: "value estimates",
            expected: signal.len() + 1,
            actual: values.len(),
        });
    }
    Ok(signal
        .iter()
        .enumerate()
        .map(|(t, x)| x + gamma * values[t + 1] - values[t])
        .collect())
}

/// Generalized advantage estimates `sum_l (gamma lambda)^l delta_{t+l}`,
/// truncated at the end of the episode.
pub fn gae(signal: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    let deltas = td_residuals(signal, values, gamma)?;
    let mut out = vec![0.0; deltas.len()];
    let mut acc = 0.0;
    for t in (0..deltas.len()).rev() {
        acc = deltas[t] + gamma * lambda * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// GAE for one channel of an episode given `V(s_0..s_T)`; the final value is
/// replaced by 0 when the episode terminated.
pub fn episode_gae(
    episode: &Episode,
    values: &[f64],
    gamma: f64,
    lambda: f64,
    channel: Channel,
) -> Result<Vec<f64>> {
    let mut values = values.to_vec();
    if episode.terminated() {
        if let Some(last) = values.last_mut() {
            *last = 0.0;
        }
    }
    gae(&episode.signal(channel), &values, gamma, lambda)
}

/// Value networks for the reward and cost channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticPair {
    pub reward: Mlp,
    pub cost: Mlp,
}

impl CriticPair {
    pub fn new(obs_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(CriticPair {
            reward: Mlp::new(&sizes, Activation::Tanh, rng)?,
            cost: Mlp::new(&sizes, Activation::Tanh, rng)?,
        })
    }

    pub fn get(&self, channel: Channel) -> &Mlp {
        match channel {
            Channel::Reward => &self.reward,
            Channel::Cost => &self.cost,
        }
    }

    pub fn get_mut(&mut self, channel: Channel) -> &mut Mlp {
        match channel {
            Channel::Reward => &mut self.reward,
            Channel::Cost => &mut self.cost,
        }
    }

    pub fn optimizers(&self, lr: f64) -> CriticOptimizers {
        CriticOptimizers {
            reward: AdamState::new(self.reward.num_params(), lr),
            cost: AdamState::new(self.cost.num_params(), lr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticOptimizers {
    pub reward: AdamState,
    pub cost: AdamState,
}

impl CriticOptimizers {
    fn get_mut(&mut self, channel: Channel) -> &mut AdamState {
        match channel {
            Channel::Reward => &mut self.reward,
            Channel::Cost => &mut self.cost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Standardise reward advantages per batch. Cost advantages are never
    /// rescaled.
    pub normalize_reward: bool,
}

/// Flattened per-step training data for a set of episodes.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    /// Log-probabilities of `actions` under the collecting policy.
    pub log_probs: Vec<f64>,
    pub reward_to_go: Vec<f64>,
    pub cost_to_go: Vec<f64>,
    pub reward_adv: Vec<f64>,
    pub cost_adv: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

impl RolloutBatch {
    /// Observe every state, evaluate both critics and compute returns-to-go
    /// and advantages. Episodes cut by the horizon bootstrap with the critic
    /// value of their last state, terminated ones with 0. `log_probs` is
    /// left empty for the caller to fill.
    pub fn assemble(
        env: &dyn CmdpEnv,
        episodes: &[Episode],
        critics: &CriticPair,
        cfg: &AdvantageConfig,
    ) -> Result<Self> {
        let spec = env.spec();
        let steps: usize = episodes.iter().map(Episode::len).sum();
        if steps == 0 {
            return Err(Error::InvalidInput("rollout batch has no transitions".into()));
        }
        // observations of s_0..s_T for every episode, stacked
        let total_states = steps + episodes.len();
        let mut all_obs = Array2::zeros((total_states, spec.obs_dim));
        let mut actions = Array2::zeros((steps, spec.action_dim));
        let mut row = 0;
        let mut step_row = 0;
        for ep in episodes {
            for s in ep.states() {
                let o = env.observe(s);
                all_obs.row_mut(row).assign(&ndarray::ArrayView1::from(&o));
                row += 1;
            }
            for t in &ep.transitions {
                actions
                    .row_mut(step_row)
                    .assign(&ndarray::ArrayView1::from(&t.action));
                step_row += 1;
            }
        }
        let v_r = critics.reward.forward_batch(all_obs.view())?;
        let v_c = critics.cost.forward_batch(all_obs.view())?;

        let mut obs = Array2::zeros((steps, spec.obs_dim));
        let mut out = RolloutBatch {
            obs: Array2::zeros((0, 0)),
            actions,
            log_probs: Vec::new(),
            reward_to_go: Vec::with_capacity(steps),
            cost_to_go: Vec::with_capacity(steps),
            reward_adv: Vec::with_capacity(steps),
            cost_adv: Vec::with_capacity(steps),
            episode_lengths: Vec::with_capacity(episodes.len()),
            provenance: Vec::with_capacity(episodes.len()),
        };
        let mut start = 0;
        let mut step_row = 0;
        for ep in episodes {
            let n = ep.len();
            for k in 0..n {
                obs.row_mut(step_row + k).assign(&all_obs.row(start + k));
            }
            for (channel, values) in [(Channel::Reward, &v_r), (Channel::Cost, &v_c)] {
                let vals: Vec<f64> = (start..start + n + 1).map(|i| values[[i, 0]]).collect();
                let tail = if ep.terminated() { 0.0 } else { vals[n] };
                let rtg = returns_to_go(&ep.signal(channel), cfg.gamma, tail);
                let adv = episode_gae(ep, &vals, cfg.gamma, cfg.gae_lambda, channel)?;
                match channel {
                    Channel::Reward => {
                        out.reward_to_go.extend(rtg);
                        out.reward_adv.extend(adv);
                    }
                    Channel::Cost => {
                        out.cost_to_go.extend(rtg);
                        out.cost_adv.extend(adv);
                    }
                }
            }
            out.episode_lengths.push(n);
            out.provenance.push(ep.provenance);
            start += n + 1;
            step_row += n;
        }
        out.obs = obs;
        if cfg.normalize_reward {
            standardize(&mut out.reward_adv);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn returns(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Reward => &self.reward_to_go,
            Channel::Cost => &self.cost_to_go,
        }
    }
}

/// Shift to mean 0 and scale to unit standard deviation (left unscaled when
/// the spread is negligible).
pub fn standardize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    x.iter_mut().for_each(|v| *v = (*v - mean) * scale);
}

/// Mean squared error `1/N sum (V(s_t) - target_t)^2` and its gradient.
pub fn value_loss(
    net: &Mlp,
    obs: ArrayView2<'_, f64>,
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if obs.nrows() != targets.len() {
        return Err(Error::Shape {
            context: "value targets",
            expected: obs.nrows(),
            actual: targets.len(),
        });
    }
    let n = targets.len() as f64;
    let mut inner: Result<()> = Ok(());
    let out = gradient(net, |m, g| {
        let tape = match m.forward_tape(obs) {
            Ok(t) => t,
            Err(e) => {
                inner = Err(e);
                return 0.0;
            }
        };
        let pred = tape.output();
        let mut d_out = Array2::zeros(pred.raw_dim());
        let mut loss = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            let e = pred[[i, 0]] - y;
            loss += e * e;
            d_out[[i, 0]] = 2.0 * e / n;
        }
        if let Err(e) = m.backward(&tape, d_out.view(), g) {
            inner = Err(e);
        }
        loss / n
    });
    inner?;
    out
}

/// `iters` Adam steps on each critic, each on a random minibatch (the whole
/// batch when `minibatch` is 0 or exceeds its size). Returns the final
/// full-batch losses `(reward, cost)`.
pub fn critic_update(
    critics: &mut CriticPair,
    batch: &RolloutBatch,
    opts: &mut CriticOptimizers,
    iters: usize,
    minibatch: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let n = batch.len();
    let mb = if minibatch == 0 || minibatch >= n { n } else { minibatch };
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..iters {
        let idx: Vec<usize> = if mb == n {
            order.clone()
        } else {
            order.shuffle(rng);
            order[..mb].to_vec()
        };
        let obs = batch.obs.select(ndarray::Axis(0), &idx);
        for channel in [Channel::Reward, Channel::Cost] {
            let targets: Vec<f64> = idx.iter().map(|&i| batch.returns(channel)[i]).collect();
            let (_, g) = value_loss(critics.get(channel), obs.view(), &targets)?;
            opts.get_mut(channel)
                .step(critics.get_mut(channel).params_mut(), &g)?;
        }
    }
    let (lr, _) = value_loss(&critics.reward, batch.obs.view(), &batch.reward_to_go)?;
    let (lc, _) = value_loss(&critics.cost, batch.obs.view(), &batch.cost_to_go)?;
    Ok((lr, lc))
}
