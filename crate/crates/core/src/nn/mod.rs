//! Small dense multilayer perceptrons with exact first- and second-order
//! reverse-mode gradients and an Adam optimizer.
//!
//! Parameters and activations are kept in 64-bit floats; only checkpoints
//! are narrowed to 32 bits.

mod adam;
mod checkpoint;
mod grad;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use grad::{input_gradient, input_gradients, param_gradients, penalty_gradients, Penalty};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Identity,
    Sigmoid,
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    /// First derivative. Rectifiers take the negative-side slope at zero.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    /// Second derivative; zero everywhere for the piecewise-linear rectifiers.
    #[inline]
    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            _ => 0.0,
        }
    }

    pub(crate) fn code(self) -> (u32, f32) {
        match self {
            Activation::Identity => (0, 0.0),
            Activation::Sigmoid => (1, 0.0),
            Activation::Relu => (2, 0.0),
            Activation::LeakyRelu { slope } => (3, slope as f32),
        }
    }

    pub(crate) fn from_code(code: u32, param: f32) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Sigmoid,
            2 => Activation::Relu,
            3 => Activation::LeakyRelu {
                slope: f64::from(param),
            },
            _ => return None,
        })
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    /// Input width followed by each layer's output width.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        MlpSpec {
            layer_sizes,
            hidden_activation: hidden,
            output_activation: output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::validation("an MLP needs at least one layer"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::validation(format!(
                "layer sizes must be positive: {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.depth() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InitMode {
    HeUniform,
    /// He-uniform, then the final layer zeroed so a residual wrapper starts
    /// as the identity map.
    ZeroLastLayerResidual,
}

/// One affine layer; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of an MLP. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(MlpParams {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.layers.len() != self.spec.depth() {
            return Err(Error::validation(format!(
                "{} layers for a spec of depth {}",
                self.layers.len(),
                self.spec.depth()
            )));
        }
        for (i, (l, w)) in self.layers.iter().zip(self.spec.layer_sizes.windows(2)).enumerate() {
            if l.weight.dim() != (w[1], w[0]) || l.bias.len() != w[1] {
                return Err(Error::validation(format!(
                    "layer {i}: weight {:?} / bias {} do not match {}->{}",
                    l.weight.dim(),
                    l.bias.len(),
                    w[0],
                    w[1]
                )));
            }
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite parameter"));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

pub fn init_mlp(spec: &MlpSpec, mode: InitMode, seed: u64) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(spec)?;
    let mut rng = rng::stream(seed, &["mlp-init"]);
    let depth = params.layers.len();
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let bound = (6.0 / layer.fan_in() as f64).sqrt();
        layer
            .weight
            .mapv_inplace(|_| rng.random_range(-bound..=bound));
        if mode == InitMode::ZeroLastLayerResidual && i + 1 == depth {
            layer.weight.fill(0.0);
        }
    }
    Ok(params)
}

/// Pre- and post-activation values of every layer for one batch.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub input: Array2<f64>,
    pub pre: Vec<Array2<f64>>,
    pub post: Vec<Array2<f64>>,
}

impl Trace {
    pub fn layer_input(&self, layer: usize) -> ArrayView2<'_, f64> {
        if layer == 0 {
            self.input.view()
        } else {
            self.post[layer - 1].view()
        }
    }

    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("non-empty trace")
    }
}

fn check_input(params: &MlpParams, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != params.spec.input_dim() {
        return Err(Error::validation(format!(
            "input width {} does not match network fan-in {}",
            x.ncols(),
            params.spec.input_dim()
        )));
    }
    if params.layers.len() != params.spec.depth() {
        return Err(Error::validation("parameters do not match their spec"));
    }
    Ok(())
}

pub(crate) fn forward_trace(params: &MlpParams, x: ArrayView2<f64>) -> Result<Trace> {
    check_input(params, &x)?;
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut post: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    for (i, layer) in params.layers.iter().enumerate() {
        let input = if i == 0 { x.view() } else { post[i - 1].view() };
        let mut z = input.dot(&layer.weight.t());
        z += &layer.bias.view().insert_axis(Axis(0));
        let act = params.spec.activation(i);
        let a = z.mapv(|v| act.apply(v));
        pre.push(z);
        post.push(a);
    }
    Ok(Trace {
        input: x.to_owned(),
        pre,
        post,
    })
}

/// Evaluates the network on a batch (one sample per row).
pub fn mlp_forward(params: &MlpParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(params, &x)?;
    let mut a = x.to_owned();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = a.dot(&layer.weight.t());
        z += &layer.bias.view().insert_axis(Axis(0));
        let act = params.spec.activation(i);
        z.mapv_inplace(|v| act.apply(v));
        a = z;
    }
    Ok(a)
}

pub(crate) fn map_derivative(act: Activation, z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| act.derivative(v))
}

pub(crate) fn hadamard(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    Zip::from(&mut out).and(b).for_each(|o, &v| *o *= v);
    out
}
