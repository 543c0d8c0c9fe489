//! Model-based PPO-Lagrangian.
//!
//! Each outer epoch collects real episodes, refits the dynamics ensemble on
//! every real transition seen so far, then repeatedly trains the actor and
//! critics on short imaginary rollouts while the new policy keeps beating
//! the old one in enough ensemble members.

mod rollout;
mod run;

pub use rollout::{
    collect_real, estimate_sample_cost, imaginary_rollout, mix_first_pass, InteractionCounter,
};
pub use run::{run, run_with, MbppoConfig, MbppoState, CHECKPOINT_FORMAT};
