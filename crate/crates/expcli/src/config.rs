use std::path::{Path, PathBuf};

use mbppol::cmdp_env::{CircleTrack, CircleTrackConfig, CmdpEnv, DiscreteCmdp, HazardGoal2D, HazardGoalConfig};
use mbppol::dynamics_model::EnsembleConfig;
use mbppol::lagrangian_ppo::{Agent, LagrangeConfig, ModelFreeConfig, PpoConfig};
use mbppol::mbppo::MbppoConfig;
use mbppol::parallel::Execution;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Environment choice with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum EnvConfig {
    #[serde(rename = "hazard_goal_2d")]
    HazardGoal2D(HazardGoalConfig),
    #[serde(rename = "circle_track")]
    CircleTrack(CircleTrackConfig),
    #[serde(rename = "chain3")]
    Chain3,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::HazardGoal2D(HazardGoalConfig::default())
    }
}

impl EnvConfig {
    /// Environment with default parameters, by registry name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "hazard_goal_2d" => Ok(EnvConfig::HazardGoal2D(HazardGoalConfig::default())),
            "circle_track" => Ok(EnvConfig::CircleTrack(CircleTrackConfig::default())),
            "chain3" => Ok(EnvConfig::Chain3),
            other => Err(CliError::Config(format!(
                "unknown environment {other:?}; expected hazard_goal_2d, circle_track or chain3"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::HazardGoal2D(_) => "hazard_goal_2d",
            EnvConfig::CircleTrack(_) => "circle_track",
            EnvConfig::Chain3 => "chain3",
        }
    }

    pub fn build(&self) -> Result<Box<dyn CmdpEnv>> {
        Ok(match self {
            EnvConfig::HazardGoal2D(c) => Box::new(HazardGoal2D::new(c.clone())?),
            EnvConfig::CircleTrack(c) => Box::new(CircleTrack::new(c.clone())?),
            EnvConfig::Chain3 => Box::new(DiscreteCmdp::chain3()),
        })
    }
}

/// Model-based settings that have no model-free counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBasedSection {
    pub ensemble: EnsembleConfig,
    pub model_horizon: usize,
    pub imaginary_episodes: usize,
    pub pr_threshold: f64,
    pub pr_episodes: usize,
    pub max_inner_passes: usize,
    pub real_fraction: f64,
}

impl Default for ModelBasedSection {
    fn default() -> Self {
        let d = MbppoConfig::default();
        ModelBasedSection {
            ensemble: d.ensemble,
            model_horizon: d.model_horizon,
            imaginary_episodes: d.imaginary_episodes,
            pr_threshold: d.pr_threshold,
            pr_episodes: d.pr_episodes,
            max_inner_passes: d.max_inner_passes,
            real_fraction: d.real_fraction,
        }
    }
}

/// Experiment description loaded from a JSON file. Every field has a
/// default, and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub agent: Agent,
    pub env: EnvConfig,
    pub seeds: Vec<u64>,
    /// Real environment steps per seed.
    pub budget: u64,
    /// Real episodes per epoch (model-free) or per outer epoch (model-based).
    pub episodes_per_epoch: usize,
    pub ppo: PpoConfig,
    pub lagrange: LagrangeConfig,
    pub model_based: ModelBasedSection,
    pub execution: Execution,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            agent: Agent::MbppoLagrangian,
            env: EnvConfig::default(),
            seeds: (0..5).collect(),
            budget: 450_000,
            episodes_per_epoch: 10,
            ppo: PpoConfig::default(),
            lagrange: LagrangeConfig {
                cost_limit: 5.0,
                ..LagrangeConfig::default()
            },
            model_based: ModelBasedSection::default(),
            execution: Execution::default(),
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seed list contains duplicates".into()));
        }
        let env = self.env.build()?;
        match self.agent {
            Agent::MbppoLagrangian => self.model_based(self.seeds[0]).validate(env.spec())?,
            _ => self.model_free(self.seeds[0]).ppo.validate()?,
        }
        Ok(())
    }

    pub fn model_free(&self, seed: u64) -> ModelFreeConfig {
        ModelFreeConfig {
            agent: self.agent,
            ppo: self.ppo.clone(),
            lagrange: self.lagrange.clone(),
            episodes_per_epoch: self.episodes_per_epoch,
            budget: self.budget,
            seed,
            execution: self.execution,
        }
    }

    pub fn model_based(&self, seed: u64) -> MbppoConfig {
        let m = &self.model_based;
        MbppoConfig {
            ppo: self.ppo.clone(),
            lagrange: self.lagrange.clone(),
            ensemble: m.ensemble.clone(),
            model_horizon: m.model_horizon,
            real_episodes: self.episodes_per_epoch,
            imaginary_episodes: m.imaginary_episodes,
            pr_threshold: m.pr_threshold,
            pr_episodes: m.pr_episodes,
            max_inner_passes: m.max_inner_passes,
            real_fraction: m.real_fraction,
            budget: self.budget,
            seed,
            execution: self.execution,
        }
    }
}
