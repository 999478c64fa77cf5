//! Feed-forward policy-and-value network.
//!
//! A tanh MLP trunk over the flat feature vector feeds two affine heads: a
//! concentration head, mapped through `softplus(.) + 1` to Dirichlet
//! concentrations over the N+1 allocation weights, and a scalar value head.
//!
//! Parameters live in one flat vector. Each layer stores its weight matrix
//! row-major (`out x in`) followed by its bias; trunk layers come first,
//! then the concentration head, then the value head.

mod checkpoint;
pub mod dirichlet;
mod gradcheck;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, max_relative_error, numeric_gradient, OutputLoss, FD_STEP};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Action;

/// Actions with a component below this have no usable log-density.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input feature")]
    NonFiniteInput,
    #[error("action component {0} is on the simplex boundary")]
    BoundaryAction(f64),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint io: {0}")]
    Io(String),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub n_outputs: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_dim: 20,
            hidden: vec![64, 64],
            n_outputs: 6,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(NetError::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(NetError::InvalidConfig("hidden widths must be >= 1".into()));
        }
        if self.n_outputs < 2 {
            return Err(NetError::InvalidConfig("n_outputs must be >= 2".into()));
        }
        Ok(())
    }

    /// Trunk widths including the input layer.
    fn trunk_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.hidden.iter().copied())
            .collect()
    }
}

/// `(fan_in, fan_out)` for every affine layer, value head last.
fn layer_shapes(input_dim: usize, hidden: &[usize], n_outputs: usize) -> Vec<(usize, usize)> {
    let mut shapes = Vec::with_capacity(hidden.len() + 2);
    let mut prev = input_dim;
    for &h in hidden {
        shapes.push((prev, h));
        prev = h;
    }
    shapes.push((prev, n_outputs));
    shapes.push((prev, 1));
    shapes
}

/// Gradient of a scalar loss with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrad {
    pub alpha: Vec<f64>,
    pub value: f64,
}

impl OutputGrad {
    pub fn zeros(n_outputs: usize) -> Self {
        Self {
            alpha: vec![0.0; n_outputs],
            value: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub alpha: Vec<f64>,
    pub mean_weights: Vec<f64>,
    pub value: f64,
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input followed by every hidden activation.
    activations: Vec<Vec<f64>>,
    logits: Vec<f64>,
    pub output: PolicyOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    input_dim: usize,
    hidden: Vec<usize>,
    n_outputs: usize,
    params: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = W x + b` for the layer stored at `params[offset..]`.
fn affine(params: &[f64], offset: usize, input: &[f64], fan_out: usize) -> Vec<f64> {
    let fan_in = input.len();
    let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
    (0..fan_out)
        .map(|o| {
            let row = &params[offset + o * fan_in..offset + (o + 1) * fan_in];
            bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

impl PolicyNet {
    /// Xavier-uniform weights, zero biases, deterministic in `config.seed`.
    pub fn init(config: &NetConfig) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut offset = 0;
        for (fan_in, fan_out) in net.shapes() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-limit..limit);
            }
            offset += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    /// All parameters zero: every input maps to uniform weights.
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let n = layer_shapes(config.input_dim, &config.hidden, config.n_outputs)
            .iter()
            .map(|(i, o)| (i + 1) * o)
            .sum();
        Ok(Self {
            input_dim: config.input_dim,
            hidden: config.hidden.clone(),
            n_outputs: config.n_outputs,
            params: vec![0.0; n],
        })
    }

    pub(crate) fn from_parts(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let (&input_dim, rest) = dims
            .split_first()
            .ok_or_else(|| NetError::InvalidConfig("empty manifest".into()))?;
        let (&n_outputs, hidden) = rest
            .split_last()
            .ok_or_else(|| NetError::InvalidConfig("manifest needs input and output".into()))?;
        let mut net = Self::zeros(&NetConfig {
            input_dim,
            hidden: hidden.to_vec(),
            n_outputs,
            seed: 0,
        })?;
        if params.len() != net.params.len() {
            return Err(NetError::DimensionMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        layer_shapes(self.input_dim, &self.hidden, self.n_outputs)
    }

    /// Layer manifest: input width, hidden widths, output count.
    pub fn manifest(&self) -> Vec<usize> {
        NetConfig {
            input_dim: self.input_dim,
            hidden: self.hidden.clone(),
            n_outputs: self.n_outputs,
            seed: 0,
        }
        .trunk_dims()
        .into_iter()
        .chain(std::iter::once(self.n_outputs))
        .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput);
        }
        Ok(())
    }

    pub fn forward_cached(&self, features: &[f64]) -> Result<ForwardCache> {
        self.check_input(features)?;
        let mut activations = Vec::with_capacity(self.hidden.len() + 1);
        activations.push(features.to_vec());
        let mut offset = 0;
        for &width in &self.hidden {
            let input = activations.last().unwrap();
            let mut h = affine(&self.params, offset, input, width);
            h.iter_mut().for_each(|v| *v = v.tanh());
            offset += (input.len() + 1) * width;
            activations.push(h);
        }
        let last = activations.last().unwrap();
        let logits = affine(&self.params, offset, last, self.n_outputs);
        offset += (last.len() + 1) * self.n_outputs;
        let value = affine(&self.params, offset, last, 1)[0];

        let alpha: Vec<f64> = logits.iter().map(|l| softplus(*l) + 1.0).collect();
        let total: f64 = alpha.iter().sum();
        let mean_weights = alpha.iter().map(|a| a / total).collect();
        Ok(ForwardCache {
            activations,
            logits,
            output: PolicyOutput {
                alpha,
                mean_weights,
                value,
            },
        })
    }

    pub fn forward(&self, features: &[f64]) -> Result<PolicyOutput> {
        Ok(self.forward_cached(features)?.output)
    }

    /// Deterministic allocation: the Dirichlet mean.
    pub fn mean_action(&self, features: &[f64]) -> Result<Action> {
        let out = self.forward(features)?;
        Ok(Action::new(out.mean_weights).expect("Dirichlet mean lies on the simplex"))
    }

    /// Samples an allocation and returns it with its log-density.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        rng: &mut R,
    ) -> Result<(Action, f64)> {
        let out = self.forward(features)?;
        let x = dirichlet::sample(&out.alpha, rng);
        let lp = dirichlet::log_density(&out.alpha, &x);
        Ok((Action::new(x).expect("normalized sample lies on the simplex"), lp))
    }

    pub fn log_prob(&self, features: &[f64], action: &Action) -> Result<f64> {
        let w = action.weights();
        if w.len() != self.n_outputs {
            return Err(NetError::DimensionMismatch {
                expected: self.n_outputs,
                got: w.len(),
            });
        }
        if let Some(&v) = w.iter().find(|v| **v < BOUNDARY_TOL) {
            return Err(NetError::BoundaryAction(v));
        }
        let out = self.forward(features)?;
        Ok(dirichlet::log_density(&out.alpha, w))
    }

    /// Reverse-mode gradient over all parameters for one input.
    pub fn backward(&self, features: &[f64], upstream: &OutputGrad) -> Result<Vec<f64>> {
        let cache = self.forward_cached(features)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(&cache, upstream, &mut grad)?;
        Ok(grad)
    }

    /// Accumulates the gradient for a cached forward pass into `grad`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: &OutputGrad,
        grad: &mut [f64],
    ) -> Result<()> {
        if upstream.alpha.len() != self.n_outputs {
            return Err(NetError::DimensionMismatch {
                expected: self.n_outputs,
                got: upstream.alpha.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(NetError::DimensionMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let shapes = self.shapes();
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut acc = 0;
        for (i, o) in &shapes {
            offsets.push(acc);
            acc += (i + 1) * o;
        }
        let n_hidden = self.hidden.len();
        let last = &cache.activations[n_hidden];
        let width = last.len();

        let d_logits: Vec<f64> = upstream
            .alpha
            .iter()
            .zip(&cache.logits)
            .map(|(g, l)| g * sigmoid(*l))
            .collect();
        let mut d_last = vec![0.0; width];
        accumulate_affine(
            &self.params,
            grad,
            offsets[n_hidden],
            last,
            &d_logits,
            &mut d_last,
        );
        accumulate_affine(
            &self.params,
            grad,
            offsets[n_hidden + 1],
            last,
            &[upstream.value],
            &mut d_last,
        );

        let mut d_out = d_last;
        for layer in (0..n_hidden).rev() {
            let out = &cache.activations[layer + 1];
            let d_pre: Vec<f64> = d_out
                .iter()
                .zip(out)
                .map(|(g, h)| g * (1.0 - h * h))
                .collect();
            let input = &cache.activations[layer];
            let mut d_in = vec![0.0; input.len()];
            accumulate_affine(&self.params, grad, offsets[layer], input, &d_pre, &mut d_in);
            d_out = d_in;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, encode_checkpoint(self)).map_err(|e| NetError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| NetError::Io(e.to_string()))?;
        decode_checkpoint(&bytes)
    }
}

/// Backprop through `out = W x + b`: adds dW, db into `grad` and dx into `d_input`.
fn accumulate_affine(
    params: &[f64],
    grad: &mut [f64],
    offset: usize,
    input: &[f64],
    d_out: &[f64],
    d_input: &mut [f64],
) {
    let fan_in = input.len();
    let bias_at = offset + fan_in * d_out.len();
    for (o, g) in d_out.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        let row = offset + o * fan_in;
        for i in 0..fan_in {
            grad[row + i] += g * input[i];
            d_input[i] += g * params[row + i];
        }
        grad[bias_at + o] += g;
    }
}
