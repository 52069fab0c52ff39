//! Feed-forward networks with explicit backpropagation, plus SGD and Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
    Linear,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Linear => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Activation::Sigmoid,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Linear,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// out × in
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape("dense layer bias", weights.shape(), (bias.len(), 1)));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(input: usize, output: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let mut weights = Matrix::zeros(output, input);
        for w in weights.as_mut_slice() {
            *w = limit * (2.0 * rng.uniform() - 1.0);
        }
        DenseLayer {
            weights,
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("dense forward", x.shape(), self.weights.shape()));
        }
        let mut z = x.matmul_nt(&self.weights)?;
        z.add_row_vector(&self.bias)?;
        let act = self.activation;
        z.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        Ok(z)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}

/// Every intermediate output of a forward pass; `values[0]` is the input.
#[derive(Debug, Clone)]
pub struct Activations {
    pub values: Vec<Matrix>,
}

impl Activations {
    pub fn output(&self) -> &Matrix {
        self.values.last().expect("activations hold at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.values[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    /// d loss / d input, for chaining through an upstream network.
    pub input: Matrix,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::param("gradient sets belong to different networks"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights = a.weights.add(&b.weights)?;
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
        self.input = self.input.add(&other.input)?;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
}

impl MlpNetwork {
    /// `widths` lists every layer width including the input, so it has one
    /// more entry than `activations`.
    pub fn new(widths: &[usize], activations: &[Activation], rng: &mut RngStream) -> Result<Self> {
        if widths.len() != activations.len() + 1 || activations.is_empty() {
            return Err(Error::param(format!(
                "{} widths do not fit {} activations",
                widths.len(),
                activations.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::param("layer widths must be ≥ 1"));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| DenseLayer::init(w[0], w[1], act, rng))
            .collect();
        Ok(MlpNetwork { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    "layer chaining",
                    pair[0].weights.shape(),
                    pair[1].weights.shape(),
                ));
            }
        }
        Ok(MlpNetwork { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Activations> {
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(values.last().expect("non-empty"))?;
            values.push(next);
        }
        Ok(Activations { values })
    }

    /// Network output only.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut current = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            current = layer.forward(&current)?;
        }
        Ok(current)
    }

    /// Exact gradients of a scalar loss given `d loss / d output`.
    pub fn backward(&self, acts: &Activations, grad_output: &Matrix) -> Result<Gradients> {
        if acts.values.len() != self.layers.len() + 1 {
            return Err(Error::param(format!(
                "stale activations: {} values for {} layers",
                acts.values.len(),
                self.layers.len()
            )));
        }
        for (layer, (input, output)) in self
            .layers
            .iter()
            .zip(acts.values.iter().zip(&acts.values[1..]))
        {
            if input.cols() != layer.input_dim() || output.cols() != layer.output_dim() {
                return Err(Error::shape("stale activations", input.shape(), layer.weights.shape()));
            }
        }
        if grad_output.shape() != acts.output().shape() {
            return Err(Error::shape("backward", grad_output.shape(), acts.output().shape()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let output = &acts.values[l + 1];
            let act = layer.activation;
            let delta = upstream.zip_map(output, |g, y| g * act.derivative_from_output(y))?;
            let weights = delta.matmul_tn(&acts.values[l])?;
            let bias = delta.col_sums();
            upstream = delta.matmul(&layer.weights)?;
            grads.push(LayerGradient { weights, bias });
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: upstream,
        })
    }

    /// Mutable parameter slices: weights then bias, layer by layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }
}

/// Loss values paired with their gradient w.r.t. the prediction.
pub mod loss {
    use super::*;

    fn check(pred: &Matrix, target: &Matrix, op: &'static str) -> Result<f64> {
        if pred.shape() != target.shape() {
            return Err(Error::shape(op, pred.shape(), target.shape()));
        }
        Ok(pred.as_slice().len().max(1) as f64)
    }

    /// Mean squared error over all entries.
    pub fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        let count = check(pred, target, "mse")?;
        let diff = pred.sub(target)?;
        let value = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / count;
        Ok((value, diff.scale(2.0 / count)))
    }

    /// Mean absolute error over all entries; subgradient 0 at a tie.
    pub fn mae(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        let count = check(pred, target, "mae")?;
        let diff = pred.sub(target)?;
        let value = diff.as_slice().iter().map(|d| d.abs()).sum::<f64>() / count;
        let grad = diff.map(|d| {
            if d > 0.0 {
                1.0 / count
            } else if d < 0.0 {
                -1.0 / count
            } else {
                0.0
            }
        });
        Ok((value, grad))
    }

    const PROB_FLOOR: f64 = 1e-12;

    /// Mean binary cross-entropy of probabilities `prob` (n×1) against 0/1 labels.
    pub fn bce(prob: &Matrix, labels: &[f64]) -> Result<(f64, Matrix)> {
        if prob.cols() != 1 || prob.rows() != labels.len() {
            return Err(Error::shape("bce", prob.shape(), (labels.len(), 1)));
        }
        let n = labels.len().max(1) as f64;
        let mut value = 0.0;
        let mut grad = Matrix::zeros(prob.rows(), 1);
        for (i, &y) in labels.iter().enumerate() {
            let p = prob[(i, 0)].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            value -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            grad[(i, 0)] = (p - y) / (p * (1.0 - p) * n);
        }
        Ok((value / n, grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Optimizer state. Adam moments are created on the first step and must
/// match the parameter shapes on every later step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::param(format!("learning rate must be > 0, got {lr}")));
        }
        Ok(Optimizer {
            kind,
            lr,
            first: Vec::new(),
            second: Vec::new(),
            step_count: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::param("parameters and gradients are not congruent"));
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= self.lr * g);
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
                    self.second = self.first.clone();
                }
                if self.first.len() != params.len()
                    || self.first.iter().zip(&params).any(|(m, p)| m.len() != p.len())
                {
                    return Err(Error::param("Adam moments do not match parameter shapes"));
                }
                let t = self.step_count as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (slot, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let m = &mut self.first[slot];
                    let v = &mut self.second[slot];
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn step_network(&mut self, net: &mut MlpNetwork, grads: &Gradients) -> Result<()> {
        self.step(net.params_mut(), grads.slices())
    }
}
