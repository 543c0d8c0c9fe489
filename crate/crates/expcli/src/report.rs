//! Run summaries, cross-seed aggregates and baseline normalization.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::log::{read_log, LogRow};
use crate::{read_json, write_json, CliError, Result};

/// Number of trailing outer epochs summarised as the final performance.
pub const FINAL_WINDOW: usize = 10;

/// Per-seed result written next to the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub agent: String,
    pub env: String,
    pub seed: u64,
    pub interactions: u64,
    /// Outer epochs; equal to log rows for model-free agents.
    pub epochs: usize,
    /// Mean discounted reward return over the last outer epochs.
    pub final_reward: f64,
    /// Mean discounted cost return over the last outer epochs.
    pub final_cost: f64,
    pub cost_limit: f64,
    /// `final_cost <= cost_limit`.
    pub feasible: bool,
    pub cumulative_violations: u64,
    /// First outer epoch after which the smoothed reward has settled, if any.
    pub converged_epoch: Option<usize>,
}

impl SeedSummary {
    pub fn from_log(agent: &str, env: &str, seed: u64, cost_limit: f64, rows: &[LogRow]) -> Self {
        let outer = outer_rows(rows);
        let rewards: Vec<f64> = outer.iter().map(|r| r.avg_reward_return).collect();
        let costs: Vec<f64> = outer.iter().map(|r| r.avg_cost_return).collect();
        let final_reward = mbppol::metrics::tail_mean(&rewards, FINAL_WINDOW).unwrap_or(f64::NAN);
        let final_cost = mbppol::metrics::tail_mean(&costs, FINAL_WINDOW).unwrap_or(f64::NAN);
        SeedSummary {
            agent: agent.into(),
            env: env.into(),
            seed,
            interactions: rows.last().map_or(0, |r| r.interactions),
            epochs: outer.len(),
            final_reward,
            final_cost,
            cost_limit,
            feasible: final_cost <= cost_limit,
            cumulative_violations: rows.last().map_or(0, |r| r.cumulative_violations),
            converged_epoch: mbppol::metrics::convergence_epoch(&rewards, 10, 0.02, 20),
        }
    }
}

/// The first row of every outer epoch, which carries that epoch's real
/// episode statistics.
pub fn outer_rows(rows: &[LogRow]) -> Vec<&LogRow> {
    rows.iter().filter(|r| r.pass == 0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Stat {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

/// Cross-seed statistics of one experiment directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds: Vec<SeedSummary>,
    pub final_reward: Option<Stat>,
    pub final_cost: Option<Stat>,
    pub cumulative_violations: Option<Stat>,
    pub interactions: Option<Stat>,
    pub feasible_seeds: usize,
}

impl Aggregate {
    pub fn of(seeds: Vec<SeedSummary>) -> Self {
        let col = |f: fn(&SeedSummary) -> f64| Stat::of(&seeds.iter().map(f).collect::<Vec<_>>());
        Aggregate {
            final_reward: col(|s| s.final_reward),
            final_cost: col(|s| s.final_cost),
            cumulative_violations: col(|s| s.cumulative_violations as f64),
            interactions: col(|s| s.interactions as f64),
            feasible_seeds: seeds.iter().filter(|s| s.feasible).count(),
            seeds,
        }
    }
}

/// Seed subdirectories of `dir` that contain a summary, ordered by seed.
pub fn seed_summaries(dir: &Path) -> Result<Vec<(PathBuf, SeedSummary)>> {
    let entries = std::fs::read_dir(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CliError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let path = entry.path();
        let is_seed = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("seed_"));
        let summary = path.join("summary.json");
        if is_seed && summary.is_file() {
            out.push((path, read_json::<SeedSummary>(&summary)?));
        }
    }
    out.sort_by_key(|(_, s)| s.seed);
    Ok(out)
}

/// Recompute `aggregate.json` from the seed summaries under `dir`.
pub fn aggregate(dir: &Path) -> Result<Aggregate> {
    let seeds = seed_summaries(dir)?.into_iter().map(|(_, s)| s).collect();
    let agg = Aggregate::of(seeds);
    write_json(&dir.join("aggregate.json"), &agg)?;
    Ok(agg)
}

/// Running count of unit-cost real steps from per-epoch counts.
pub fn cumulative_violations(rows: &[LogRow]) -> Vec<u64> {
    let per_epoch: Vec<u64> = rows.iter().map(|r| r.epoch_violations).collect();
    mbppol::metrics::cumulative_violations(&per_epoch)
}

/// Divide a series by a positive baseline scalar.
pub fn normalize_against_baseline(series: &[f64], baseline: f64) -> Result<Vec<f64>> {
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(CliError::InvalidBaseline(format!(
            "baseline must be positive and finite, got {baseline}"
        )));
    }
    Ok(series.iter().map(|v| v / baseline).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSource {
    pub dir: PathBuf,
    pub agent: String,
    pub env: String,
    pub seed: u64,
    /// Final cumulative violations of the baseline run.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeed {
    pub seed: u64,
    pub baseline: BaselineSource,
    /// Cumulative violations per log row divided by the baseline value.
    pub cumulative_violations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub metric: String,
    pub seeds: Vec<NormalizedSeed>,
}

/// Normalize the cumulative violations of every seed in `dir` by the final
/// count of the unconstrained PPO run with the same seed in `baseline_dir`,
/// and write `normalized.json` into `dir`.
pub fn normalize_dir(dir: &Path, baseline_dir: &Path) -> Result<Normalized> {
    let runs = seed_summaries(dir)?;
    if runs.is_empty() {
        return Err(CliError::Config(format!("no seed summaries under {}", dir.display())));
    }
    let mut seeds = Vec::with_capacity(runs.len());
    for (path, summary) in runs {
        let base_dir = baseline_dir.join(format!("seed_{}", summary.seed));
        let base_file = base_dir.join("summary.json");
        if !base_file.is_file() {
            return Err(CliError::MissingBaseline(format!(
                "unconstrained ppo run on {} with seed {} expected at {}",
                summary.env,
                summary.seed,
                base_file.display()
            )));
        }
        let base: SeedSummary = read_json(&base_file)?;
        if base.agent != "ppo" || base.env != summary.env {
            return Err(CliError::InvalidBaseline(format!(
                "{} holds a {} run on {}, need ppo on {}",
                base_file.display(),
                base.agent,
                base.env,
                summary.env
            )));
        }
        let rows = read_log(&path.join("log.csv"))?;
        let series: Vec<f64> = cumulative_violations(&rows).iter().map(|&v| v as f64).collect();
        let value = base.cumulative_violations as f64;
        seeds.push(NormalizedSeed {
            seed: summary.seed,
            cumulative_violations: normalize_against_baseline(&series, value)?,
            baseline: BaselineSource {
                dir: base_dir,
                agent: base.agent,
                env: base.env,
                seed: base.seed,
                value,
            },
        });
    }
    let out = Normalized {
        metric: "cumulative_violations".into(),
        seeds,
    };
    write_json(&dir.join("normalized.json"), &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(violations: &[u64]) -> Vec<LogRow> {
        let mut total = 0;
        violations
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                total += v;
                LogRow {
                    epoch: i,
                    outer_epoch: i,
                    pass: 0,
                    interactions: 10 * (i as u64 + 1),
                    avg_reward_return: i as f64,
                    avg_cost_return: 1.0,
                    avg_episode_cost: v as f64,
                    lambda: 0.0,
                    sample_cost: None,
                    epoch_violations: v,
                    cumulative_violations: total,
                    performance_ratio: None,
                }
            })
            .collect()
    }

    #[test]
    fn zero_cost_run_has_zero_series() {
        assert_eq!(cumulative_violations(&rows(&[0, 0, 0])), vec![0, 0, 0]);
    }

    #[test]
    fn final_count_is_total_unit_cost_steps() {
        let r = rows(&[3, 0, 4, 1]);
        let series = cumulative_violations(&r);
        assert_eq!(*series.last().unwrap(), 8);
        assert!(series.windows(2).all(|w| w[0] <= w[1]));
        let logged: Vec<u64> = r.iter().map(|r| r.cumulative_violations).collect();
        assert_eq!(series, logged);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_against_baseline(&[200.0, 200.0], 200.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(normalize_against_baseline(&[120.0], 200.0).unwrap(), vec![0.6]);
        assert_eq!(normalize_against_baseline(&[0.0, 0.0], 7.0).unwrap(), vec![0.0, 0.0]);
        assert!(normalize_against_baseline(&[1.0], 0.0).is_err());
        assert!(normalize_against_baseline(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn stat_median_and_mean() {
        let s = Stat::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 4.0);
        assert_eq!((s.min, s.max), (1.0, 10.0));
        assert_eq!(Stat::of(&[5.0, 1.0, 3.0]).unwrap().median, 3.0);
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn summary_uses_last_outer_epochs() {
        let mut r = rows(&[1; 15]);
        r[14].avg_cost_return = 11.0;
        let s = SeedSummary::from_log("ppo_lagrangian", "chain3", 0, 2.0, &r);
        assert_eq!(s.epochs, 15);
        assert!((s.final_reward - 9.5).abs() < 1e-12);
        assert!((s.final_cost - 2.0).abs() < 1e-12);
        assert!(s.feasible);
        assert_eq!(s.cumulative_violations, 15);
        assert_eq!(s.interactions, 150);
    }
}
