use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffnum::{Activation, AdamState, Mlp};
use crate::rng::Rng;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian actor: an MLP maps observations to the action mean, and
/// a state-independent log-std vector sets the spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub trunk: Mlp,
    /// Raw parameters; [`GaussianPolicy::log_std`] clamps them.
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        init_log_std: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let mut trunk = Mlp::new(&sizes, Activation::Tanh, rng)?;
        // start near a zero-mean policy
        trunk.scale_output_layer(0.01);
        Ok(GaussianPolicy {
            trunk,
            log_std: vec![init_log_std; action_dim],
        })
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn log_std(&self) -> Vec<f64> {
        self.log_std
            .iter()
            .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std().iter().map(|l| l.exp()).collect()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.trunk.forward(obs)
    }

    /// Draw an action and return it with its log-density.
    pub fn sample(&self, obs: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(obs)?;
        let log_std = self.log_std();
        let mut action = Vec::with_capacity(mean.len());
        let mut logp = 0.0;
        for (m, l) in mean.iter().zip(&log_std) {
            let z: f64 = StandardNormal.sample(rng);
            action.push(m + l.exp() * z);
            logp += -0.5 * z * z - l - HALF_LN_TAU;
        }
        Ok((action, logp))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        if action.len() != self.action_dim() {
            return Err(Error::Shape {
                context: "policy action",
                expected: self.action_dim(),
                actual: action.len(),
            });
        }
        let mean = self.mean(obs)?;
        Ok(gaussian_log_prob(&mean, action, &self.log_std()))
    }

    pub fn log_prob_batch(
        &self,
        obs: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>> {
        let means = self.trunk.forward_batch(obs)?;
        Ok(batch_log_prob(&means, actions, &self.log_std()))
    }
}

pub(crate) fn gaussian_log_prob(mean: &[f64], action: &[f64], log_std: &[f64]) -> f64 {
    mean.iter()
        .zip(action)
        .zip(log_std)
        .map(|((m, a), l)| {
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - HALF_LN_TAU
        })
        .sum()
}

pub(crate) fn batch_log_prob(
    means: &Array2<f64>,
    actions: ArrayView2<'_, f64>,
    log_std: &[f64],
) -> Vec<f64> {
    means
        .rows()
        .into_iter()
        .zip(actions.rows())
        .map(|(m, a)| {
            m.iter()
                .zip(a.iter())
                .zip(log_std)
                .map(|((m, a), l)| {
                    let z = (a - m) / l.exp();
                    -0.5 * z * z - l - HALF_LN_TAU
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptimizer {
    pub trunk: AdamState,
    pub log_std: AdamState,
}

impl PolicyOptimizer {
    pub fn new(policy: &GaussianPolicy, lr: f64) -> Self {
        PolicyOptimizer {
            trunk: AdamState::new(policy.trunk.num_params(), lr),
            log_std: AdamState::new(policy.log_std.len(), lr),
        }
    }

    pub fn step(
        &mut self,
        policy: &mut GaussianPolicy,
        grad_trunk: &[f64],
        grad_log_std: &[f64],
    ) -> Result<()> {
        self.trunk.step(policy.trunk.params_mut(), grad_trunk)?;
        self.log_std.step(&mut policy.log_std, grad_log_std)
    }
}
