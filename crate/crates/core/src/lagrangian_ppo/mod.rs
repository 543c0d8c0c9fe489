//! PPO-Lagrangian: Gaussian actor, clipped surrogates for both channels, the
//! projected multiplier update and the model-free training loop.

mod lagrange;
mod objective;
mod policy;
mod train;

pub use lagrange::{LagrangeConfig, LagrangeState};
pub use objective::{
    clipped_surrogate, clipped_surrogate_terms, lagrangian_policy_loss, CostSurrogate, PolicyLoss, PolicyMinibatch,
};
pub use policy::{GaussianPolicy, PolicyOptimizer, LOG_STD_MAX, LOG_STD_MIN};
pub(crate) use train::abort;
pub use train::{
    build_batch, collect_episodes, ppo_update, run_episode, Learner, train_model_free, train_model_free_with, Agent, ModelFreeConfig, PpoConfig, TrainOutcome,
    UpdateStats,
};
