//! Constrained reinforcement learning with Lagrangian-relaxed PPO.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffnum`]: tanh multilayer perceptrons with hand-written reverse-mode
//!   gradients and an Adam optimizer.
//! * [`cmdp_env`]: the CMDP environment trait, three concrete environments and
//!   an exact solver for small discrete CMDPs.
//! * [`estimation`]: returns-to-go, GAE and the reward/cost critics.
//! * [`lagrangian_ppo`]: the Gaussian actor, clipped surrogates, the projected
//!   multiplier update and the model-free PPO-Lagrangian trainer.
//! * [`dynamics_model`]: an ensemble of diagonal-Gaussian next-state models and
//!   the performance-ratio gate.
//! * [`mbppo`]: the model-based PPO-Lagrangian orchestrator.
//!
//! Data-parallel loops (episode collection, member training, imaginary
//! rollouts) go through [`parallel`], which runs on rayon when the `parallel`
//! feature is enabled and falls back to plain iteration otherwise. Results are
//! identical either way.

pub mod cmdp_env;
pub mod diffnum;
pub mod dynamics_model;
pub mod error;
pub mod estimation;
pub mod lagrangian_ppo;
pub mod mbppo;
pub mod metrics;
pub mod parallel;
pub mod rng;

pub use error::{Error, Result};
