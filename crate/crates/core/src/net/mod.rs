//! Two-layer projection network with hand-written backpropagation.
//!
//! `y = act(act(x W1 + b1) W2 + b2)`, evaluated row-wise on batches. In the
//! S2F direction the input is a class semantic vector and the output lives
//! in feature space; F2S is the reverse.

mod adam;
mod checkpoint;
mod objective;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use objective::{loss_and_grad, transductive_loss_and_grad, Objective, Projection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Semantic vectors are projected into feature space.
    S2F,
    /// Features are projected into semantic space.
    F2S,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::S2F => "S2F",
            Direction::F2S => "F2S",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "S2F" => Ok(Direction::S2F),
            "F2S" => Ok(Direction::F2S),
            _ => Err(format!("unknown direction `{s}` (expected S2F or F2S)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(format!("unknown activation `{s}` (expected tanh or relu)")),
        }
    }
}

/// Layer sizes `(in_dim, hidden, out_dim)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Dims { input, hidden, output }
    }

    /// Layer sizes for a task with the given semantic and feature dimensions.
    pub fn for_task(direction: Direction, semantic_dim: usize, feature_dim: usize, hidden: usize) -> Self {
        match direction {
            Direction::S2F => Dims::new(semantic_dim, hidden, feature_dim),
            Direction::F2S => Dims::new(feature_dim, hidden, semantic_dim),
        }
    }
}

/// Parameter-shaped storage. Used for the network weights, for gradients
/// and for the Adam moment accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Partial derivatives of a scalar loss, one entry per parameter.
pub type Gradients = Params;

impl Params {
    pub fn zeros(dims: Dims) -> Self {
        Params {
            w1: Array2::zeros((dims.input, dims.hidden)),
            b1: Array1::zeros(dims.hidden),
            w2: Array2::zeros((dims.hidden, dims.output)),
            b2: Array1::zeros(dims.output),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.w1.dim() == other.w1.dim()
            && self.b1.dim() == other.b1.dim()
            && self.w2.dim() == other.w2.dim()
            && self.b2.dim() == other.b2.dim()
    }

    /// Named flat views, in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("w1", self.w1.as_slice().expect("standard layout")),
            ("b1", self.b1.as_slice().expect("standard layout")),
            ("w2", self.w2.as_slice().expect("standard layout")),
            ("b2", self.b2.as_slice().expect("standard layout")),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 4] {
        [
            ("w1", self.w1.as_slice_mut().expect("standard layout")),
            ("b1", self.b1.as_slice_mut().expect("standard layout")),
            ("w2", self.w2.as_slice_mut().expect("standard layout")),
            ("b2", self.b2.as_slice_mut().expect("standard layout")),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &Params) {
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.b2.scaled_add(scale, &other.b2);
    }

    /// First non-finite tensor, by name.
    pub fn non_finite(&self) -> Option<&'static str> {
        self.tensors().into_iter().find(|(_, t)| t.iter().any(|v| !v.is_finite())).map(|(n, _)| n)
    }
}

/// Forward-pass intermediates kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace {
    input: Array2<f64>,
    hidden: Array2<f64>,
    output: Array2<f64>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionNet {
    pub direction: Direction,
    pub activation: Activation,
    pub params: Params,
}

impl ProjectionNet {
    /// Xavier-uniform weights, zero biases.
    pub fn init(direction: Direction, dims: Dims, activation: Activation, seed: u64) -> Result<Self> {
        if dims.input == 0 || dims.hidden == 0 || dims.output == 0 {
            return Err(ZslError::arg(format!("layer sizes must be positive, got {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xavier = |fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut rng))
        };
        let w1 = xavier(dims.input, dims.hidden);
        let w2 = xavier(dims.hidden, dims.output);
        let params = Params { w1, b1: Array1::zeros(dims.hidden), w2, b2: Array1::zeros(dims.output) };
        Ok(ProjectionNet { direction, activation, params })
    }

    pub fn from_params(direction: Direction, activation: Activation, params: Params) -> Result<Self> {
        let d = params.dims();
        if params.b1.len() != d.hidden || params.w2.nrows() != d.hidden || params.b2.len() != d.output {
            return Err(ZslError::arg("layer shapes do not chain"));
        }
        if let Some(name) = params.non_finite() {
            return Err(ZslError::Numeric(name.into()));
        }
        Ok(ProjectionNet { direction, activation, params })
    }

    pub fn dims(&self) -> Dims {
        self.params.dims()
    }

    /// Batched forward pass keeping intermediates.
    pub fn forward_traced(&self, input: &Array2<f64>) -> Result<Trace> {
        if input.ncols() != self.dims().input {
            return Err(ZslError::arg(format!(
                "input dimension {} does not match network input {}",
                input.ncols(),
                self.dims().input
            )));
        }
        let act = self.activation;
        let hidden = (input.dot(&self.params.w1) + &self.params.b1).mapv_into(|v| act.apply(v));
        let output = (hidden.dot(&self.params.w2) + &self.params.b2).mapv_into(|v| act.apply(v));
        Ok(Trace { input: input.clone(), hidden, output })
    }

    pub fn forward_batch(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_traced(input)?.output)
    }

    pub fn forward(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let x = v.to_owned().insert_axis(Axis(0));
        Ok(self.forward_batch(&x)?.row(0).to_owned())
    }

    /// Gradients of a loss whose derivative w.r.t. the traced output is `d_out`.
    pub fn backward(&self, trace: &Trace, d_out: &Array2<f64>) -> Gradients {
        let act = self.activation;
        let mut dz2 = d_out.clone();
        dz2.zip_mut_with(&trace.output, |g, &y| *g *= act.grad_from_output(y));
        let w2 = trace.hidden.t().dot(&dz2);
        let b2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&self.params.w2.t());
        dz1.zip_mut_with(&trace.hidden, |g, &h| *g *= act.grad_from_output(h));
        let w1 = trace.input.t().dot(&dz1);
        let b1 = dz1.sum_axis(Axis(0));
        Params { w1, b1, w2, b2 }
    }

    /// Sum of squared weight-matrix entries; biases are not penalised.
    pub fn l2_penalty(&self) -> f64 {
        self.params.w1.iter().chain(self.params.w2.iter()).map(|w| w * w).sum()
    }

    /// Gradient of `lambda * l2_penalty()`.
    pub fn l2_grad(&self, lambda: f64) -> Gradients {
        let mut g = Params::zeros(self.dims());
        g.w1 = &self.params.w1 * (2.0 * lambda);
        g.w2 = &self.params.w2 * (2.0 * lambda);
        g
    }
}
