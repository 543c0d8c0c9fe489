use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CmdpEnv, CmdpSpec};
use crate::{
    rng::{self, Rng},
    Error, Result,
};

/// Parameters of [`HazardGoal2D`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HazardGoalConfig {
    /// The arena is the square `[-half_width, half_width]^2`.
    pub half_width: f64,
    pub min_hazards: usize,
    pub max_hazards: usize,
    pub hazard_radius: f64,
    /// Hazard centres are drawn in this box: `[x_lo, x_hi, y_lo, y_hi]`.
    pub hazard_region: [f64; 4],
    pub goal: [f64; 2],
    pub goal_radius: f64,
    /// Agents spawn uniformly in `[x_lo, x_hi, y_lo, y_hi]`.
    pub spawn_region: [f64; 4],
    /// Displacement per step at full throttle.
    pub speed: f64,
    /// Gain on the per-step reduction in goal distance.
    pub progress_gain: f64,
    pub goal_bonus: f64,
    pub noise_std: f64,
    pub lidar_bins: usize,
    pub lidar_range: f64,
    pub horizon: usize,
    pub gamma: f64,
    pub layout_seed: u64,
}

impl Default for HazardGoalConfig {
    fn default() -> Self {
        HazardGoalConfig {
            half_width: 2.0,
            min_hazards: 6,
            max_hazards: 8,
            hazard_radius: 0.2,
            hazard_region: [-0.9, 0.9, -0.8, 0.8],
            goal: [1.5, 0.0],
            goal_radius: 0.3,
            spawn_region: [-1.9, 1.9, -1.9, 1.9],
            speed: 0.03,
            progress_gain: 1.0,
            goal_bonus: 1.0,
            noise_std: 0.002,
            lidar_bins: 16,
            lidar_range: 1.0,
            horizon: 200,
            gamma: 0.99,
            layout_seed: 0,
        }
    }
}

/// Velocity-controlled point mass that must reach a goal disc while avoiding
/// circular hazards.
///
/// The state is the agent position `(x, y)`. The hazard and goal layout is a
/// deterministic function of `layout_seed`. Per step the reward is
/// `progress_gain * (prev_goal_dist - goal_dist) + goal_bonus * [at goal]`;
/// it is negative on retreating steps. Reaching the goal ends the episode.
/// The cost is 1 when the new position lies inside any hazard.
///
/// Observations are `[x/w, y/w, (gx-x)/2w, (gy-y)/2w, lidar...]` where each
/// lidar bin is centred on a bearing around the agent. A hazard's reading
/// `1 - gap/lidar_range` is shared linearly between the two bins nearest its
/// bearing, and each bin keeps its largest share. The gap is negative inside
/// a hazard, so readings exceed 1 there.
#[derive(Debug, Clone)]
pub struct HazardGoal2D {
    cfg: HazardGoalConfig,
    spec: CmdpSpec,
    hazards: Vec<[f64; 2]>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn pos(state: &[f64]) -> [f64; 2] {
    [state[0], state[1]]
}

impl HazardGoal2D {
    pub fn new(cfg: HazardGoalConfig) -> Result<Self> {
        if cfg.min_hazards > cfg.max_hazards {
            return Err(Error::Config("min_hazards exceeds max_hazards".into()));
        }
        if cfg.lidar_bins == 0 {
            return Err(Error::Config("lidar_bins must be positive".into()));
        }
        let spec = CmdpSpec {
            state_dim: 2,
            obs_dim: 4 + cfg.lidar_bins,
            action_dim: 2,
            action_low: -1.0,
            action_high: 1.0,
            horizon: cfg.horizon,
            gamma: cfg.gamma,
        };
        spec.validate()?;
        let hazards = Self::layout(&cfg);
        Ok(HazardGoal2D { cfg, spec, hazards })
    }

    fn layout(cfg: &HazardGoalConfig) -> Vec<[f64; 2]> {
        let mut r = rng::derive(cfg.layout_seed, 0x4841_5A41_5244);
        let n = r.gen_range(cfg.min_hazards..=cfg.max_hazards);
        let [x0, x1, y0, y1] = cfg.hazard_region;
        let keep_clear = cfg.hazard_radius + cfg.goal_radius + 0.05;
        let mut hazards = Vec::with_capacity(n);
        while hazards.len() < n {
            let h = [r.gen_range(x0..x1), r.gen_range(y0..y1)];
            if dist(h, cfg.goal) > keep_clear {
                hazards.push(h);
            }
        }
        hazards
    }

    pub fn config(&self) -> &HazardGoalConfig {
        &self.cfg
    }

    pub fn hazards(&self) -> &[[f64; 2]] {
        &self.hazards
    }

    pub fn goal(&self) -> [f64; 2] {
        self.cfg.goal
    }

    pub fn in_hazard(&self, p: [f64; 2]) -> bool {
        self.hazards
            .iter()
            .any(|&h| dist(p, h) <= self.cfg.hazard_radius)
    }

    pub fn at_goal(&self, p: [f64; 2]) -> bool {
        dist(p, self.cfg.goal) <= self.cfg.goal_radius
    }

    fn lidar(&self, p: [f64; 2]) -> Vec<f64> {
        let bins = self.cfg.lidar_bins;
        let mut out = vec![0.0; bins];
        for &h in &self.hazards {
            // Signed gap: inside a hazard the reading keeps growing with depth.
            let gap = dist(p, h) - self.cfg.hazard_radius;
            let reading = 1.0 - gap / self.cfg.lidar_range;
            if reading <= 0.0 {
                continue;
            }
            // Split the reading between the two nearest bin centres so the
            // observation varies continuously with the bearing.
            let angle = (h[1] - p[1]).atan2(h[0] - p[0]).rem_euclid(2.0 * PI);
            let x = angle / (2.0 * PI) * bins as f64 - 0.5;
            let lo = x.floor();
            let frac = x - lo;
            let lo = (lo as isize).rem_euclid(bins as isize) as usize;
            let hi = (lo + 1) % bins;
            out[lo] = f64::max(out[lo], (1.0 - frac) * reading);
            out[hi] = f64::max(out[hi], frac * reading);
        }
        out
    }
}

impl CmdpEnv for HazardGoal2D {
    fn name(&self) -> &str {
        "hazard_goal_2d"
    }

    fn spec(&self) -> &CmdpSpec {
        &self.spec
    }

    fn sample_initial(&self, rng: &mut Rng) -> Vec<f64> {
        let [x0, x1, y0, y1] = self.cfg.spawn_region;
        loop {
            let p = [rng.gen_range(x0..x1), rng.gen_range(y0..y1)];
            if !self.in_hazard(p) && !self.at_goal(p) {
                return p.to_vec();
            }
        }
    }

    fn transition(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Vec<f64> {
        let w = self.cfg.half_width;
        (0..2)
            .map(|i| {
                let noise = if self.cfg.noise_std > 0.0 {
                    let z: f64 = StandardNormal.sample(rng);
                    self.cfg.noise_std * z
                } else {
                    0.0
                };
                (state[i] + self.cfg.speed * action[i] + noise).clamp(-w, w)
            })
            .collect()
    }

    fn reward(&self, state: &[f64], _action: &[f64], next: &[f64]) -> f64 {
        let g = self.cfg.goal;
        let progress = dist(pos(state), g) - dist(pos(next), g);
        let bonus = if self.at_goal(pos(next)) {
            self.cfg.goal_bonus
        } else {
            0.0
        };
        self.cfg.progress_gain * progress + bonus
    }

    fn cost(&self, _state: &[f64], _action: &[f64], next: &[f64]) -> f64 {
        if self.in_hazard(pos(next)) {
            1.0
        } else {
            0.0
        }
    }

    fn is_terminal(&self, state: &[f64]) -> bool {
        self.at_goal(pos(state))
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        let w = self.cfg.half_width;
        let p = pos(state);
        let g = self.cfg.goal;
        let mut obs = Vec::with_capacity(self.spec.obs_dim);
        obs.extend_from_slice(&[
            p[0] / w,
            p[1] / w,
            (g[0] - p[0]) / (2.0 * w),
            (g[1] - p[1]) / (2.0 * w),
        ]);
        obs.extend(self.lidar(p));
        obs
    }
}
