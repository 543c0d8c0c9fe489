//! Per-epoch training records and helpers for reading learning curves.

use serde::{Deserialize, Serialize};

use crate::cmdp_env::Channel;
use crate::estimation::Episode;

/// One row of a training log. Model-based runs emit one row per inner pass;
/// rows from the same outer epoch share `interactions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub outer_epoch: usize,
    pub pass: usize,
    /// Real environment steps consumed so far.
    pub interactions: u64,
    /// Mean discounted reward return of the latest real episodes.
    pub avg_reward_return: f64,
    /// Mean discounted cost return of the latest real episodes.
    pub avg_cost_return: f64,
    /// Mean undiscounted per-episode cost of the latest real episodes.
    pub avg_episode_cost: f64,
    /// Multiplier after this row's update.
    pub lambda: f64,
    /// Truncated imaginary cost estimate, model-based rows only.
    pub sample_cost: Option<f64>,
    pub epoch_violations: u64,
    pub cumulative_violations: u64,
    pub performance_ratio: Option<f64>,
}

/// Summary statistics of a set of real episodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episodes: usize,
    pub steps: u64,
    pub avg_reward_return: f64,
    pub avg_cost_return: f64,
    pub avg_episode_cost: f64,
    pub violations: u64,
}

impl EpisodeStats {
    pub fn from_episodes(episodes: &[Episode], gamma: f64) -> Self {
        if episodes.is_empty() {
            return EpisodeStats::default();
        }
        let n = episodes.len() as f64;
        let mean = |f: &dyn Fn(&Episode) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        EpisodeStats {
            episodes: episodes.len(),
            steps: episodes.iter().map(|e| e.len() as u64).sum(),
            avg_reward_return: mean(&|e| e.discounted_return(gamma, Channel::Reward)),
            avg_cost_return: mean(&|e| e.discounted_return(gamma, Channel::Cost)),
            avg_episode_cost: mean(&|e| e.signal(Channel::Cost).iter().sum()),
            violations: episodes.iter().map(|e| e.violations() as u64).sum(),
        }
    }
}

/// Running totals of per-epoch violation counts.
pub fn cumulative_violations(per_epoch: &[u64]) -> Vec<u64> {
    per_epoch
        .iter()
        .scan(0u64, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Trailing moving average; early entries average over what is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Mean of the last `window` values, the "converged" level of a curve.
pub fn tail_mean(values: &[f64], window: usize) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let k = window.clamp(1, values.len());
    Some(values[values.len() - k..].iter().sum::<f64>() / k as f64)
}

/// Index of the first epoch at which the smoothed curve has changed by less
/// than `rel_tol` (relative) over each of the previous `patience` epochs.
pub fn convergence_epoch(values: &[f64], window: usize, rel_tol: f64, patience: usize) -> Option<usize> {
    let smooth = moving_average(values, window);
    let mut run = 0;
    for i in 1..smooth.len() {
        let scale = smooth[i - 1].abs().max(1e-12);
        if (smooth[i] - smooth[i - 1]).abs() / scale < rel_tol {
            run += 1;
            if run >= patience {
                return Some(i);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// First index whose value reaches `target`.
pub fn first_reaching(values: &[f64], target: f64) -> Option<usize> {
    values.iter().position(|&v| v >= target)
}
