use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::policy::{batch_log_prob, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
use crate::diffnum::gradient;
use crate::estimation::RolloutBatch;
use crate::Result;

/// Policy-gradient inputs for a set of steps.
#[derive(Debug, Clone)]
pub struct PolicyMinibatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub old_log_probs: Vec<f64>,
    pub reward_adv: Vec<f64>,
    pub cost_adv: Vec<f64>,
}

impl PolicyMinibatch {
    pub fn from_batch(batch: &RolloutBatch, idx: Option<&[usize]>) -> Self {
        match idx {
            None => PolicyMinibatch {
                obs: batch.obs.clone(),
                actions: batch.actions.clone(),
                old_log_probs: batch.log_probs.clone(),
                reward_adv: batch.reward_adv.clone(),
                cost_adv: batch.cost_adv.clone(),
            },
            Some(idx) => {
                let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
                PolicyMinibatch {
                    obs: batch.obs.select(Axis(0), idx),
                    actions: batch.actions.select(Axis(0), idx),
                    old_log_probs: pick(&batch.log_probs),
                    reward_adv: pick(&batch.reward_adv),
                    cost_adv: pick(&batch.cost_adv),
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }
}

/// `mean_t min(r_t A_t, clip(r_t, 1-eps, 1+eps) A_t)` and its derivative with
/// respect to each ratio. Where the two branches tie the unclipped
/// derivative `A_t / N` is used.
pub fn clipped_surrogate_terms(ratios: &[f64], adv: &[f64], eps: f64) -> (f64, Vec<f64>) {
    let n = ratios.len() as f64;
    let mut total = 0.0;
    let grads = ratios
        .iter()
        .zip(adv)
        .map(|(&r, &a)| {
            let unclipped = r * a;
            let clipped = r.clamp(1.0 - eps, 1.0 + eps) * a;
            if unclipped <= clipped {
                total += unclipped;
                a / n
            } else {
                total += clipped;
                0.0
            }
        })
        .collect();
    (total / n, grads)
}

fn ratios(policy: &GaussianPolicy, mb: &PolicyMinibatch) -> Result<(Array2<f64>, Vec<f64>)> {
    let means = policy.trunk.forward_batch(mb.obs.view())?;
    let logp = batch_log_prob(&means, mb.actions.view(), &policy.log_std());
    let r = logp
        .iter()
        .zip(&mb.old_log_probs)
        .map(|(l, o)| (l - o).exp())
        .collect();
    Ok((means, r))
}

/// Clipped surrogate of `policy` on the minibatch for the given advantages.
pub fn clipped_surrogate(
    policy: &GaussianPolicy,
    mb: &PolicyMinibatch,
    advantages: &[f64],
    eps: f64,
) -> Result<f64> {
    let (_, r) = ratios(policy, mb)?;
    Ok(clipped_surrogate_terms(&r, advantages, eps).0)
}

/// Value and gradient of the actor loss.
#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub loss: f64,
    pub reward_surrogate: f64,
    pub cost_surrogate: f64,
    pub grad_trunk: Vec<f64>,
    pub grad_log_std: Vec<f64>,
    /// Fraction of samples whose ratio lies outside `[1-eps, 1+eps]`.
    pub clip_fraction: f64,
    /// Sample estimate of `KL(old || new)`.
    pub approx_kl: f64,
}

/// How the cost channel enters the actor loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSurrogate {
    /// `min(r A^C, clip(r) A^C)`, the same clipped form as the reward.
    /// Because the cost is minimised, this bound is optimistic and does not
    /// limit how far the ratio moves away from costly actions.
    Clipped,
    /// `max(r A^C, clip(r) A^C)`, the pessimistic bound for a minimised
    /// quantity, which keeps the trust region for the cost term.
    #[default]
    Pessimistic,
}

/// Actor loss `-(J^R_clip - lambda J^C_clip) / (1 + lambda)` (without the
/// `1 + lambda` divisor when `normalize` is false), with its gradient.
pub fn lagrangian_policy_loss(
    policy: &GaussianPolicy,
    mb: &PolicyMinibatch,
    lambda: f64,
    eps: f64,
    normalize: bool,
    cost: CostSurrogate,
) -> Result<PolicyLoss> {
    let log_std = policy.log_std();
    let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let scale = if normalize { 1.0 / (1.0 + lambda) } else { 1.0 };

    let mut out = None;
    let (loss, grad_trunk) = gradient(&policy.trunk, |trunk, g| {
        let tape = trunk.forward_tape(mb.obs.view()).expect("obs dims checked by caller");
        let means = tape.output();
        let logp = batch_log_prob(means, mb.actions.view(), &log_std);
        let r: Vec<f64> = logp
            .iter()
            .zip(&mb.old_log_probs)
            .map(|(l, o)| (l - o).exp())
            .collect();
        let (jr, gr) = clipped_surrogate_terms(&r, &mb.reward_adv, eps);
        let (jc, gc) = match cost {
            CostSurrogate::Clipped => clipped_surrogate_terms(&r, &mb.cost_adv, eps),
            CostSurrogate::Pessimistic => {
                let neg: Vec<f64> = mb.cost_adv.iter().map(|a| -a).collect();
                let (j, g) = clipped_surrogate_terms(&r, &neg, eps);
                (-j, g.into_iter().map(|x| -x).collect())
            }
        };
        let loss = -scale * (jr - lambda * jc);

        // dL/dlogp_i = -scale (g^R_i - lambda g^C_i) r_i
        let dlogp: Vec<f64> = (0..r.len())
            .map(|i| -scale * (gr[i] - lambda * gc[i]) * r[i])
            .collect();
        let mut d_mean = Array2::zeros(means.raw_dim());
        let mut g_log_std = vec![0.0; log_std.len()];
        for i in 0..r.len() {
            for d in 0..log_std.len() {
                let diff = mb.actions[[i, d]] - means[[i, d]];
                d_mean[[i, d]] = dlogp[i] * diff * inv_var[d];
                g_log_std[d] += dlogp[i] * (diff * diff * inv_var[d] - 1.0);
            }
        }
        for (d, g) in g_log_std.iter_mut().enumerate() {
            let raw = policy.log_std[d];
            if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                *g = 0.0;
            }
        }
        trunk
            .backward(&tape, d_mean.view(), g)
            .expect("gradient buffer sized by gradient()");

        let n = r.len() as f64;
        let clip_fraction = r.iter().filter(|&&x| (x - 1.0).abs() > eps).count() as f64 / n;
        let approx_kl = logp
            .iter()
            .zip(&mb.old_log_probs)
            .map(|(l, o)| o - l)
            .sum::<f64>()
            / n;
        out = Some((jr, jc, g_log_std, clip_fraction, approx_kl));
        loss
    })?;
    let (reward_surrogate, cost_surrogate, grad_log_std, clip_fraction, approx_kl) =
        out.expect("objective ran");
    Ok(PolicyLoss {
        loss,
        reward_surrogate,
        cost_surrogate,
        grad_trunk,
        grad_log_std,
        clip_fraction,
        approx_kl,
    })
}
