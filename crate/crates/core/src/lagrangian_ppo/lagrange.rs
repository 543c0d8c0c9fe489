use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagrangeConfig {
    pub lambda_init: f64,
    pub lr: f64,
    pub cost_limit: f64,
    /// Threshold tightening factor in `[0, 1]`; the multiplier reacts to
    /// `cost - beta * cost_limit`.
    pub beta: f64,
}

impl Default for LagrangeConfig {
    fn default() -> Self {
        LagrangeConfig {
            lambda_init: 1.0,
            lr: 5e-2,
            cost_limit: 5.0,
            beta: 0.02,
        }
    }
}

/// Lagrange multiplier with its threshold and step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    lambda: f64,
    pub cost_limit: f64,
    pub beta: f64,
    pub lr: f64,
    updates: u64,
}

impl LagrangeState {
    pub fn new(cfg: &LagrangeConfig) -> Result<Self> {
        if !(cfg.lambda_init >= 0.0 && cfg.lambda_init.is_finite()) {
            return Err(Error::Config(format!(
                "initial multiplier must be finite and >= 0, got {}",
                cfg.lambda_init
            )));
        }
        if !(cfg.cost_limit > 0.0) {
            return Err(Error::Config(format!(
                "cost limit must be positive, got {}",
                cfg.cost_limit
            )));
        }
        if !(0.0..=1.0).contains(&cfg.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", cfg.beta)));
        }
        if !(cfg.lr > 0.0) {
            return Err(Error::Config("multiplier learning rate must be positive".into()));
        }
        Ok(LagrangeState {
            lambda: cfg.lambda_init,
            cost_limit: cfg.cost_limit,
            beta: cfg.beta,
            lr: cfg.lr,
            updates: 0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// The tightened limit `beta * d`.
    pub fn threshold(&self) -> f64 {
        self.beta * self.cost_limit
    }

    /// Projected ascent `lambda <- max(0, lambda + lr (cost - beta d))`.
    pub fn update(&mut self, cost_estimate: f64) -> Result<f64> {
        if !cost_estimate.is_finite() || cost_estimate < 0.0 {
            return Err(Error::InvalidInput(format!(
                "cost estimate must be finite and non-negative, got {cost_estimate}"
            )));
        }
        self.lambda = (self.lambda + self.lr * (cost_estimate - self.threshold())).max(0.0);
        self.updates += 1;
        Ok(self.lambda)
    }
}
