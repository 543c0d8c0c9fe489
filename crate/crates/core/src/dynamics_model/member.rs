use ndarray::{Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffnum::{gradient, Activation, Mlp};
use crate::rng::Rng;
use crate::{Error, Result};

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 4.0;

/// Per-dimension affine normalisation `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Column statistics of `rows`. Columns with (near) zero spread keep
    /// unit scale so constant features map to 0.
    pub fn fit(rows: ArrayView2<'_, f64>) -> Self {
        let n = rows.nrows().max(1) as f64;
        let mean: Vec<f64> = rows.sum_axis(Axis(0)).iter().map(|s| s / n).collect();
        let std = (0..rows.ncols())
            .map(|j| {
                let var = rows.column(j).iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                if s < 1e-8 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_rows(&self, rows: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.std.len() != self.mean.len() {
            return Err(Error::Checkpoint("normaliser mean/std length mismatch".into()));
        }
        if self.mean.iter().chain(&self.std).any(|v| !v.is_finite()) || self.std.iter().any(|&s| s < 1e-8) {
            return Err(Error::Checkpoint("normaliser statistics must be finite with std >= 1e-8".into()));
        }
        Ok(())
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smooth clamp of a raw log-variance into `[LOGVAR_MIN, LOGVAR_MAX]`,
/// returning the value and its derivative.
pub fn soft_clamp_logvar(raw: f64) -> (f64, f64) {
    let upper = LOGVAR_MAX - softplus(LOGVAR_MAX - raw);
    let d_upper = sigmoid(LOGVAR_MAX - raw);
    let y = LOGVAR_MIN + softplus(upper - LOGVAR_MIN);
    // the outer softplus tail can overshoot the bound by ~1e-6
    (y.min(LOGVAR_MAX), d_upper * sigmoid(upper - LOGVAR_MIN))
}

/// `sum_t sum_d (mu - y)^2 exp(-logvar) + logvar`, the Gaussian negative
/// log-likelihood without its constant term.
pub fn gaussian_nll(mean: ArrayView2<'_, f64>, logvar: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> f64 {
    let mut total = 0.0;
    ndarray::Zip::from(mean).and(logvar).and(target).for_each(|&m, &lv, &y| {
        total += (m - y) * (m - y) * (-lv).exp() + lv;
    });
    total
}

/// One ensemble member: a network from normalised `(s, a)` to the normalised
/// state delta mean and its log-variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDynamicsMember {
    pub net: Mlp,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    state_dim: usize,
    action_dim: usize,
}

impl GaussianDynamicsMember {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * state_dim);
        Ok(GaussianDynamicsMember {
            net: Mlp::new(&sizes, Activation::Tanh, rng)?,
            input_norm: Normalizer::identity(state_dim + action_dim),
            target_norm: Normalizer::identity(state_dim),
            state_dim,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.input_norm.check()?;
        self.target_norm.check()?;
        if self.input_norm.dim() != self.state_dim + self.action_dim
            || self.target_norm.dim() != self.state_dim
            || self.net.input_dim() != self.state_dim + self.action_dim
            || self.net.output_dim() != 2 * self.state_dim
        {
            return Err(Error::Checkpoint("ensemble member dimensions are inconsistent".into()));
        }
        Ok(())
    }

    /// Normalised mean and clamped log-variance for normalised inputs.
    pub fn predict_normalized(&self, inputs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let out = self.net.forward_batch(inputs)?;
        let d = self.state_dim;
        let mean = out.slice(ndarray::s![.., ..d]).to_owned();
        let logvar = out.slice(ndarray::s![.., d..]).mapv(|v| soft_clamp_logvar(v).0);
        Ok((mean, logvar))
    }

    fn normalized_input(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::Shape {
                context: "dynamics input",
                expected: self.state_dim + self.action_dim,
                actual: state.len() + action.len(),
            });
        }
        let mut x = state.to_vec();
        x.extend_from_slice(action);
        Ok(self.input_norm.apply(&x))
    }

    /// Mean of `s'` and the per-dimension variance of `s'`, in state units.
    pub fn predict(&self, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.net.forward(&self.normalized_input(state, action)?)?;
        let d = self.state_dim;
        let delta = self.target_norm.invert(&out[..d]);
        let mean = state.iter().zip(&delta).map(|(s, dl)| s + dl).collect();
        let var = (0..d)
            .map(|j| soft_clamp_logvar(out[d + j]).0.exp() * self.target_norm.std[j].powi(2))
            .collect();
        Ok((mean, var))
    }

    /// Draw `s'` from the member's predictive Gaussian.
    pub fn sample_next(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let out = self.net.forward(&self.normalized_input(state, action)?)?;
        let d = self.state_dim;
        let delta_n: Vec<f64> = (0..d)
            .map(|j| {
                let z: f64 = StandardNormal.sample(rng);
                out[j] + (0.5 * soft_clamp_logvar(out[d + j]).0).exp() * z
            })
            .collect();
        let delta = self.target_norm.invert(&delta_n);
        Ok(state.iter().zip(&delta).map(|(s, dl)| s + dl).collect())
    }

    /// Summed NLL on normalised inputs and targets.
    pub fn nll(&self, inputs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<f64> {
        let (mean, logvar) = self.predict_normalized(inputs)?;
        check_targets(&mean, targets)?;
        Ok(gaussian_nll(mean.view(), logvar.view(), targets))
    }

    /// Per-sample mean NLL and its gradient with respect to the network.
    pub fn nll_gradient(&self, inputs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<(f64, Vec<f64>)> {
        let d = self.state_dim;
        let n = inputs.nrows() as f64;
        let tape = self.net.forward_tape(inputs)?;
        let out = tape.output();
        if targets.dim() != (out.nrows(), d) {
            return Err(Error::Shape {
                context: "dynamics targets",
                expected: out.nrows() * d,
                actual: targets.len(),
            });
        }
        let mut inner = Ok(());
        let res = gradient(&self.net, |net, g| {
            let mut d_out = Array2::zeros(out.raw_dim());
            let mut loss = 0.0;
            for i in 0..out.nrows() {
                for j in 0..d {
                    let e = out[[i, j]] - targets[[i, j]];
                    let (lv, dlv) = soft_clamp_logvar(out[[i, d + j]]);
                    let inv = (-lv).exp();
                    loss += e * e * inv + lv;
                    d_out[[i, j]] = 2.0 * e * inv / n;
                    d_out[[i, d + j]] = (1.0 - e * e * inv) * dlv / n;
                }
            }
            if let Err(e) = net.backward(&tape, d_out.view(), g) {
                inner = Err(e);
            }
            loss / n
        });
        inner?;
        res
    }
}

fn check_targets(mean: &Array2<f64>, targets: ArrayView2<'_, f64>) -> Result<()> {
    if mean.dim() != targets.dim() {
        return Err(Error::Shape {
            context: "dynamics targets",
            expected: mean.len(),
            actual: targets.len(),
        });
    }
    Ok(())
}
