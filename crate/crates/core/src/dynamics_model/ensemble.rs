use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dataset::TransitionDataset;
use super::member::{GaussianDynamicsMember, Normalizer};
use crate::diffnum::AdamState;
use crate::parallel::{self, Execution};
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const ENSEMBLE_FORMAT: &str = "ensemble-v1";

/// Smallest dataset [`DynamicsEnsemble::train`] accepts.
pub const MIN_TRANSITIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
    pub elites: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub minibatch_size: usize,
    /// Passes over each member's bootstrap sample per training call.
    pub max_epochs: usize,
    /// Cap on gradient steps per member per training call; 0 means no cap.
    pub max_steps: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 8,
            elites: 6,
            hidden: vec![200, 200, 200, 200],
            lr: 1e-3,
            minibatch_size: 256,
            max_epochs: 50,
            max_steps: 0,
            patience: 5,
            validation_fraction: 0.1,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members < 2 {
            return Err(Error::Config("an ensemble needs at least 2 members".into()));
        }
        if self.elites == 0 || self.elites > self.members {
            return Err(Error::Config(format!(
                "elite count must lie in 1..={}, got {}",
                self.members, self.elites
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
        }
        if !(self.lr > 0.0) || self.minibatch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("ensemble lr, minibatch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one training call; NLLs are per-sample means on the shared
/// validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_validation_nll: Vec<f64>,
    pub validation_nll: Vec<f64>,
    pub epochs: Vec<usize>,
    pub elites: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsEnsemble {
    format: String,
    members: Vec<GaussianDynamicsMember>,
    optimizers: Vec<AdamState>,
    validation_nll: Vec<f64>,
    elites: Vec<usize>,
    trained: bool,
}

impl DynamicsEnsemble {
    pub fn new(state_dim: usize, action_dim: usize, cfg: &EnsembleConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let members = (0..cfg.members)
            .map(|_| GaussianDynamicsMember::new(state_dim, action_dim, &cfg.hidden, rng))
            .collect::<Result<Vec<_>>>()?;
        let optimizers = members
            .iter()
            .map(|m| AdamState::new(m.net.num_params(), cfg.lr))
            .collect();
        Ok(DynamicsEnsemble {
            format: ENSEMBLE_FORMAT.into(),
            members,
            optimizers,
            validation_nll: vec![f64::INFINITY; cfg.members],
            elites: (0..cfg.elites).collect(),
            trained: false,
        })
    }

    /// Ensemble from already-fitted members, all of them elite.
    pub fn from_members(members: Vec<GaussianDynamicsMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput("ensemble needs at least one member".into()));
        }
        for m in &members {
            m.validate()?;
        }
        let n = members.len();
        Ok(DynamicsEnsemble {
            format: ENSEMBLE_FORMAT.into(),
            optimizers: members.iter().map(|m| AdamState::new(m.net.num_params(), 1e-3)).collect(),
            members,
            validation_nll: vec![0.0; n],
            elites: (0..n).collect(),
            trained: true,
        })
    }

    pub fn check(&self) -> Result<()> {
        if self.format != ENSEMBLE_FORMAT {
            return Err(Error::Checkpoint(format!("unknown ensemble format {:?}", self.format)));
        }
        for m in &self.members {
            m.validate()?;
        }
        if self.elites.iter().any(|&e| e >= self.members.len()) || self.elites.is_empty() {
            return Err(Error::Checkpoint("elite indices out of range".into()));
        }
        Ok(())
    }

    pub fn members(&self) -> &[GaussianDynamicsMember] {
        &self.members
    }

    pub fn elites(&self) -> &[usize] {
        &self.elites
    }

    pub fn elite_members(&self) -> Vec<&GaussianDynamicsMember> {
        self.elites.iter().map(|&i| &self.members[i]).collect()
    }

    pub fn set_elites(&mut self, elites: Vec<usize>) -> Result<()> {
        if elites.is_empty() || elites.iter().any(|&e| e >= self.members.len()) {
            return Err(Error::InvalidInput("elite indices out of range".into()));
        }
        self.elites = elites;
        Ok(())
    }

    pub fn validation_nll(&self) -> &[f64] {
        &self.validation_nll
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Fit every member on its own bootstrap resample of a shared training
    /// split, with early stopping on the held-out split. Members keep their
    /// current weights as the starting point and return to their best epoch.
    pub fn train(
        &mut self,
        data: &TransitionDataset,
        cfg: &EnsembleConfig,
        rng: &mut Rng,
        exec: Execution,
    ) -> Result<TrainReport> {
        cfg.validate()?;
        if cfg.members != self.members.len() {
            return Err(Error::Config("ensemble config does not match member count".into()));
        }
        if data.len() < MIN_TRANSITIONS {
            return Err(Error::DatasetTooSmall {
                got: data.len(),
                need: MIN_TRANSITIONS,
            });
        }
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(rng);
        let n_val = ((data.len() as f64 * cfg.validation_fraction).ceil() as usize).max(1);
        let (val, train) = idx.split_at(n_val);

        let train_in = data.inputs(train);
        let train_tg = data.deltas(train);
        let input_norm = Normalizer::fit(train_in.view());
        let target_norm = Normalizer::fit(train_tg.view());
        let train_in = input_norm.apply_rows(train_in.view());
        let train_tg = target_norm.apply_rows(train_tg.view());
        let val_in = input_norm.apply_rows(data.inputs(val).view());
        let val_tg = target_norm.apply_rows(data.deltas(val).view());

        let seeds = rng::child_seeds(rng, self.members.len());
        let mut jobs: Vec<_> = self
            .members
            .iter_mut()
            .zip(self.optimizers.iter_mut())
            .zip(seeds)
            .map(|((m, o), s)| (m, o, s, (0.0, 0.0, 0)))
            .collect();
        let shared = Shared {
            train_in: &train_in,
            train_tg: &train_tg,
            val_in: &val_in,
            val_tg: &val_tg,
            cfg,
        };
        let mut failure = None;
        parallel::for_each_mut(exec, &mut jobs, |_, (member, opt, seed, out)| {
            member.input_norm = input_norm.clone();
            member.target_norm = target_norm.clone();
            match train_member(member, opt, &shared, &mut rng::from_seed(*seed)) {
                Ok(r) => *out = r,
                Err(_) => *out = (f64::NAN, f64::NAN, 0),
            }
        });
        let results: Vec<_> = jobs.into_iter().map(|(_, _, _, r)| r).collect();
        for (i, r) in results.iter().enumerate() {
            if !r.1.is_finite() && failure.is_none() {
                failure = Some(i);
            }
        }
        if let Some(i) = failure {
            return Err(Error::TrainingAborted {
                epoch: 0,
                reason: format!("ensemble member {i} produced a non-finite validation loss"),
            });
        }
        self.validation_nll = results.iter().map(|r| r.1).collect();
        let mut order: Vec<usize> = (0..self.members.len()).collect();
        order.sort_by(|&a, &b| self.validation_nll[a].total_cmp(&self.validation_nll[b]));
        self.elites = order[..cfg.elites].to_vec();
        self.trained = true;
        Ok(TrainReport {
            initial_validation_nll: results.iter().map(|r| r.0).collect(),
            validation_nll: self.validation_nll.clone(),
            epochs: results.iter().map(|r| r.2).collect(),
            elites: self.elites.clone(),
            validation_indices: val.to_vec(),
        })
    }

    /// `s'` from a uniformly chosen elite member.
    pub fn sample_next(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        let q = self.elites[rng.gen_range(0..self.elites.len())];
        self.members[q].sample_next(state, action, rng)
    }
}

struct Shared<'a> {
    train_in: &'a Array2<f64>,
    train_tg: &'a Array2<f64>,
    val_in: &'a Array2<f64>,
    val_tg: &'a Array2<f64>,
    cfg: &'a EnsembleConfig,
}

/// Returns `(initial validation NLL, best validation NLL, epochs run)`.
fn train_member(
    member: &mut GaussianDynamicsMember,
    opt: &mut AdamState,
    data: &Shared<'_>,
    rng: &mut Rng,
) -> Result<(f64, f64, usize)> {
    let n_val = data.val_in.nrows() as f64;
    let val_nll = |m: &GaussianDynamicsMember| -> Result<f64> {
        Ok(m.nll(data.val_in.view(), data.val_tg.view())? / n_val)
    };
    let n = data.train_in.nrows();
    let mut sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let initial = val_nll(member)?;
    let mut best = initial;
    let mut best_params = member.net.params().to_vec();
    let mut stale = 0;
    let mut steps = 0;
    let mut epochs = 0;
    'outer: for _ in 0..data.cfg.max_epochs {
        epochs += 1;
        sample.shuffle(rng);
        for chunk in sample.chunks(data.cfg.minibatch_size) {
            let x = data.train_in.select(Axis(0), chunk);
            let y = data.train_tg.select(Axis(0), chunk);
            let (_, g) = member.nll_gradient(x.view(), y.view())?;
            opt.step(member.net.params_mut(), &g)?;
            steps += 1;
            if data.cfg.max_steps > 0 && steps >= data.cfg.max_steps {
                let v = val_nll(member)?;
                if v < best {
                    best = v;
                    best_params.copy_from_slice(member.net.params());
                }
                break 'outer;
            }
        }
        let v = val_nll(member)?;
        if v < best - 1e-4 * best.abs().max(1.0) {
            best = v;
            best_params.copy_from_slice(member.net.params());
            stale = 0;
        } else {
            if v < best {
                best = v;
                best_params.copy_from_slice(member.net.params());
            }
            stale += 1;
            if stale >= data.cfg.patience {
                break;
            }
        }
    }
    member.net.params_mut().copy_from_slice(&best_params);
    Ok((initial, best, epochs))
}
