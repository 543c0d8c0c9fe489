//! Minimal differentiable numerics: tanh MLPs, reverse-mode gradients and Adam.
//!
//! Parameters live in one flat `Vec<f64>` per network so that optimizers,
//! finite-difference checks and checkpoints all see the same layout:
//! for each layer in order, the weight matrix row-major as `[out][in]`,
//! followed by the bias vector `[out]`.

mod adam;
mod mlp;

pub use adam::AdamState;
pub use mlp::{Activation, Mlp, MlpRecord, Tape, MLP_FORMAT};

use crate::{Error, Result};

/// Evaluate a scalar objective and its gradient with respect to `params`.
///
/// The objective receives the network and a zeroed gradient buffer with the
/// same layout as [`Mlp::params`]; it returns the loss and accumulates
/// `dloss/dparams` into the buffer (typically through [`Mlp::backward`]).
pub fn gradient<F>(params: &Mlp, objective: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&Mlp, &mut [f64]) -> f64,
{
    let mut grad = vec![0.0; params.num_params()];
    let loss = objective(params, &mut grad);
    if !loss.is_finite() {
        return Err(Error::non_finite("loss", loss));
    }
    if let Some(g) = grad.iter().copied().find(|g| !g.is_finite()) {
        return Err(Error::non_finite("gradient", g));
    }
    Ok((loss, grad))
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference<F>(x: &[f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest coordinate-wise relative error `|a-b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
