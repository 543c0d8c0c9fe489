use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CmdpEnv, CmdpSpec};
use crate::{rng::Rng, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircleTrackConfig {
    pub radius: f64,
    pub target_speed: f64,
    pub dt: f64,
    pub max_accel: f64,
    /// Width of the Gaussian reward bump in tangential speed.
    pub speed_scale: f64,
    /// Width of the Gaussian reward bump in radial offset.
    pub radial_scale: f64,
    pub noise_std: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for CircleTrackConfig {
    fn default() -> Self {
        CircleTrackConfig {
            radius: 1.0,
            target_speed: 0.5,
            dt: 0.1,
            max_accel: 1.0,
            speed_scale: 0.25,
            radial_scale: 0.2,
            noise_std: 0.001,
            horizon: 200,
            gamma: 0.99,
        }
    }
}

/// Acceleration-controlled car that should circle the origin
/// counter-clockwise at `target_speed` on the circle of radius `radius`.
///
/// State `(x, y, vx, vy)`. Reward on the new state is
/// `exp(-((v_tan - v*)/speed_scale)^2) * exp(-((|p| - radius)/radial_scale)^2)`,
/// maximal (1) on the circle at target speed. Cost is 1 outside the annulus
/// `[0.8 radius, 1.2 radius]`.
#[derive(Debug, Clone)]
pub struct CircleTrack {
    cfg: CircleTrackConfig,
    spec: CmdpSpec,
}

impl CircleTrack {
    pub fn new(cfg: CircleTrackConfig) -> Result<Self> {
        let spec = CmdpSpec {
            state_dim: 4,
            obs_dim: 4,
            action_dim: 2,
            action_low: -1.0,
            action_high: 1.0,
            horizon: cfg.horizon,
            gamma: cfg.gamma,
        };
        spec.validate()?;
        Ok(CircleTrack { cfg, spec })
    }

    pub fn config(&self) -> &CircleTrackConfig {
        &self.cfg
    }

    /// Counter-clockwise tangential speed.
    pub fn tangential_speed(state: &[f64]) -> f64 {
        let r = state[0].hypot(state[1]);
        if r == 0.0 {
            return 0.0;
        }
        (state[0] * state[3] - state[1] * state[2]) / r
    }

    pub fn reward_at(&self, state: &[f64]) -> f64 {
        let r = state[0].hypot(state[1]);
        let dv = (Self::tangential_speed(state) - self.cfg.target_speed) / self.cfg.speed_scale;
        let dr = (r - self.cfg.radius) / self.cfg.radial_scale;
        (-dv * dv).exp() * (-dr * dr).exp()
    }
}

impl CmdpEnv for CircleTrack {
    fn name(&self) -> &str {
        "circle_track"
    }

    fn spec(&self) -> &CmdpSpec {
        &self.spec
    }

    fn sample_initial(&self, rng: &mut Rng) -> Vec<f64> {
        let r = self.cfg.radius * rng.gen_range(0.9..1.1);
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        vec![r * theta.cos(), r * theta.sin(), 0.0, 0.0]
    }

    fn transition(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Vec<f64> {
        let c = &self.cfg;
        let mut next = vec![0.0; 4];
        for i in 0..2 {
            let noise = if c.noise_std > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                c.noise_std * z
            } else {
                0.0
            };
            let v = state[2 + i] + c.dt * c.max_accel * action[i];
            next[2 + i] = v;
            next[i] = state[i] + c.dt * v + noise;
        }
        next
    }

    fn reward(&self, _state: &[f64], _action: &[f64], next: &[f64]) -> f64 {
        self.reward_at(next)
    }

    fn cost(&self, _state: &[f64], _action: &[f64], next: &[f64]) -> f64 {
        let r = next[0].hypot(next[1]);
        if r < 0.8 * self.cfg.radius || r > 1.2 * self.cfg.radius {
            1.0
        } else {
            0.0
        }
    }

    fn is_terminal(&self, _state: &[f64]) -> bool {
        false
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }
}
