use ndarray::{linalg::general_mat_mul, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{rng::Rng, Error, Result};

pub const MLP_FORMAT: &str = "mlp-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected network; hidden layers use `activation`, the output layer
/// is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRecord", into = "MlpRecord")]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// On-disk layout of an [`Mlp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpRecord {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl From<Mlp> for MlpRecord {
    fn from(m: Mlp) -> Self {
        MlpRecord {
            format: MLP_FORMAT.to_string(),
            layer_sizes: m.sizes,
            activation: m.activation,
            params: m.params,
        }
    }
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRecord) -> Result<Self> {
        if r.format != MLP_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported network format {:?}",
                r.format
            )));
        }
        validate_sizes(&r.layer_sizes)?;
        let expected = count_params(&r.layer_sizes);
        if r.params.len() != expected {
            return Err(Error::Shape {
                context: "network parameters",
                expected,
                actual: r.params.len(),
            });
        }
        if let Some(&p) = r.params.iter().find(|p| !p.is_finite()) {
            return Err(Error::non_finite("network parameters", p));
        }
        Ok(Mlp {
            sizes: r.layer_sizes,
            activation: r.activation,
            params: r.params,
        })
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "layer sizes must have at least two positive entries, got {sizes:?}"
        )));
    }
    Ok(())
}

fn count_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Activations recorded during a batched forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    // activations[0] is the input, activations[k] the output of layer k.
    activations: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("tape holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.activations[0]
    }
}

impl Mlp {
    /// Uniform initialization in `±1/sqrt(fan_in)` for every layer.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        validate_sizes(sizes)?;
        let mut params = Vec::with_capacity(count_params(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out + fan_out).map(|_| rng.gen_range(-bound..bound)));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    /// Network with every parameter zero.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            params: vec![0.0; count_params(sizes)],
        })
    }

    /// Multiply the output layer's weights and bias by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let start = self.layer_offset(self.num_layers() - 1);
        self.params[start..].iter_mut().for_each(|p| *p *= factor);
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        count_params(&self.sizes[..=layer])
    }

    fn layer(&self, k: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (inp, out) = (self.sizes[k], self.sizes[k + 1]);
        let off = self.layer_offset(k);
        let w = ArrayView2::from_shape((out, inp), &self.params[off..off + out * inp])
            .expect("layout matches sizes");
        let b = ArrayView1::from(&self.params[off + out * inp..off + out * inp + out]);
        (w, b)
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_dim(),
                actual: dim,
            });
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let mut a = input.to_vec();
        let last = self.num_layers() - 1;
        for k in 0..self.num_layers() {
            let (inp, out) = (self.sizes[k], self.sizes[k + 1]);
            let off = self.layer_offset(k);
            let w = &self.params[off..off + out * inp];
            let b = &self.params[off + out * inp..off + out * inp + out];
            let mut next = Vec::with_capacity(out);
            for j in 0..out {
                let row = &w[j * inp..(j + 1) * inp];
                let z = row.iter().zip(&a).fold(b[j], |acc, (wi, ai)| acc + wi * ai);
                next.push(if k == last { z } else { self.activation.apply(z) });
            }
            a = next;
        }
        Ok(a)
    }

    /// Batched forward pass; rows of `input` are samples.
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut a = input.to_owned();
        for k in 0..self.num_layers() {
            a = self.layer_forward(k, a.view());
        }
        Ok(a)
    }

    fn layer_forward(&self, k: usize, a: ArrayView2<'_, f64>) -> Array2<f64> {
        let (w, b) = self.layer(k);
        let mut z = a.dot(&w.t());
        z += &b;
        if k + 1 < self.num_layers() {
            let act = self.activation;
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }

    /// Batched forward pass that keeps every activation for [`Mlp::backward`].
    pub fn forward_tape(&self, input: ArrayView2<'_, f64>) -> Result<Tape> {
        self.check_input(input.ncols())?;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(input.to_owned());
        for k in 0..self.num_layers() {
            let next = self.layer_forward(k, activations[k].view());
            activations.push(next);
        }
        Ok(Tape { activations })
    }

    /// Reverse pass: given `d_output = dL/d(output)` for the taped batch,
    /// accumulate `dL/dparams` into `grad` and return `dL/d(input)`.
    pub fn backward(
        &self,
        tape: &Tape,
        d_output: ArrayView2<'_, f64>,
        grad: &mut [f64],
    ) -> Result<Array2<f64>> {
        if grad.len() != self.num_params() {
            return Err(Error::Shape {
                context: "gradient buffer",
                expected: self.num_params(),
                actual: grad.len(),
            });
        }
        let out = tape.output();
        if d_output.dim() != out.dim() {
            return Err(Error::Shape {
                context: "output gradient",
                expected: out.len(),
                actual: d_output.len(),
            });
        }
        let mut delta = d_output.to_owned();
        for k in (0..self.num_layers()).rev() {
            let (inp, outd) = (self.sizes[k], self.sizes[k + 1]);
            let off = self.layer_offset(k);
            let a_prev = &tape.activations[k];
            {
                let (gw, gb) = grad[off..off + outd * inp + outd].split_at_mut(outd * inp);
                let mut gw = ArrayViewMut2::from_shape((outd, inp), gw).expect("layout");
                general_mat_mul(1.0, &delta.t(), a_prev, 1.0, &mut gw);
                for (g, d) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                    *g += d;
                }
            }
            let (w, _) = self.layer(k);
            let mut d_prev = delta.dot(&w);
            if k > 0 {
                let act = self.activation;
                d_prev.zip_mut_with(a_prev, |d, &y| *d *= act.derivative_from_output(y));
            }
            delta = d_prev;
        }
        Ok(delta)
    }
}
