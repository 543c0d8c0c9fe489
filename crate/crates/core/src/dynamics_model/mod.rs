//! Ensemble of probabilistic dynamics models.
//!
//! Each member maps a normalised `(s, a)` to a diagonal Gaussian over the
//! normalised state change. Rollouts sample a uniformly chosen elite member
//! at every step; the performance ratio compares two policies member by
//! member.

mod dataset;
mod ensemble;
mod member;
mod ratio;

pub use dataset::TransitionDataset;
pub use ensemble::{DynamicsEnsemble, EnsembleConfig, TrainReport, ENSEMBLE_FORMAT, MIN_TRANSITIONS};
pub use member::{gaussian_nll, soft_clamp_logvar, GaussianDynamicsMember, Normalizer, LOGVAR_MAX, LOGVAR_MIN};
pub use ratio::{model_return, performance_ratio, performance_ratio_over, TransitionModel};
