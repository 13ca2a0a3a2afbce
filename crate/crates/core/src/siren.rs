//! Dense multilayer perceptrons with sinusoidal hidden activations.
//!
//! A hidden sine layer computes `h = sin(omega0 * W h_prev + b)`; the
//! frequency factor multiplies the weighted input and the bias is added
//! afterwards. Tanh layers compute `tanh(W h_prev + b)` and the final layer
//! of every network is linear.
//!
//! Forward and backward passes work on row-major batches: each row of the
//! input matrix is one sample.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Frequency factor used throughout unless configured otherwise.
pub const DEFAULT_OMEGA0: f64 = 30.0;

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_param_id() -> u64 {
    NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    Sine { omega0: f64 },
    Tanh,
    Linear,
}

impl Activation {
    /// Factor applied to `W h_prev` before the bias is added.
    pub fn input_scale(&self) -> f64 {
        match *self {
            Activation::Sine { omega0 } => omega0,
            Activation::Tanh | Activation::Linear => 1.0,
        }
    }

    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Sine { .. } => z.sin(),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Sine { .. } => z.cos(),
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out_dim x in_dim`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != biases.len() {
            return Err(Error::Shape(format!(
                "weight rows ({}) must equal bias length ({})",
                weights.nrows(),
                biases.len()
            )));
        }
        if weights.ncols() == 0 || weights.nrows() == 0 {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        if let Activation::Sine { omega0 } = activation {
            if !(omega0 > 0.0 && omega0.is_finite()) {
                return Err(Error::Config(format!("omega0 must be positive, got {omega0}")));
            }
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Ordered stack of dense layers.
///
/// Every parameter mutation stamps the network with a fresh identity so that
/// a [`ForwardCache`] produced before the mutation is rejected by
/// [`Mlp::backward_batch`].
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    param_id: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by a forward pass, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    param_id: u64,
    pub inputs: Array2<f64>,
    /// Arguments of each layer's nonlinearity, `input_scale * W h_prev + b`.
    pub pre_activations: Vec<Array2<f64>>,
    pub post_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub layers: Vec<LayerGradient>,
}

impl MlpGradients {
    /// Same ordering as [`Mlp::flatten`].
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.biases.iter().copied());
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.flatten_into(&mut out);
        out
    }
}

/// SIREN initialization.
///
/// First-layer weights are drawn from `U(-1/omega0, 1/omega0)`, every later
/// layer from `U(-sqrt(6/n), sqrt(6/n))` with `n` its input dimension.
/// Biases start at zero. Hidden layers are sine layers, the last is linear.
pub fn init_siren(arch: &[usize], omega0: f64, rng: &mut Rng) -> Result<Mlp> {
    if !(omega0 > 0.0 && omega0.is_finite()) {
        return Err(Error::Config(format!("omega0 must be positive, got {omega0}")));
    }
    init_with(arch, rng, Activation::Sine { omega0 }, |layer, fan_in| {
        if layer == 0 {
            1.0 / omega0
        } else {
            (6.0 / fan_in as f64).sqrt()
        }
    })
}

/// Tanh network with `U(-sqrt(6/n), sqrt(6/n))` weights in every layer.
pub fn init_tanh(arch: &[usize], rng: &mut Rng) -> Result<Mlp> {
    init_with(arch, rng, Activation::Tanh, |_, fan_in| {
        (6.0 / fan_in as f64).sqrt()
    })
}

fn init_with(
    arch: &[usize],
    rng: &mut Rng,
    hidden: Activation,
    bound: impl Fn(usize, usize) -> f64,
) -> Result<Mlp> {
    if arch.len() < 2 {
        return Err(Error::Config(format!(
            "architecture needs at least an input and an output size, got {arch:?}"
        )));
    }
    if arch.contains(&0) {
        return Err(Error::Config(format!(
            "architecture sizes must be positive, got {arch:?}"
        )));
    }
    let n_layers = arch.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for (l, pair) in arch.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let b = bound(l, fan_in);
        let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.uniform(-b, b));
        let activation = if l + 1 == n_layers {
            Activation::Linear
        } else {
            hidden
        };
        layers.push(DenseLayer::new(weights, Array1::zeros(fan_out), activation)?);
    }
    Mlp::from_layers(layers)
}

impl Mlp {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    l,
                    pair[0].out_dim(),
                    l + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            param_id: fresh_param_id(),
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Layer sizes, input first.
    pub fn arch(&self) -> Vec<usize> {
        let mut arch = vec![self.in_dim()];
        arch.extend(self.layers.iter().map(DenseLayer::out_dim));
        arch
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Layer by layer: weights row-major, then biases.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.biases.iter().copied());
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.flatten_into(&mut out);
        out
    }

    /// Inverse of [`Mlp::flatten`]; `params` must hold exactly
    /// [`Mlp::param_count`] values.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in layer.biases.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
        self.param_id = fresh_param_id();
        Ok(())
    }

    fn check_finite_params(&self) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            if !layer.weights.iter().chain(layer.biases.iter()).all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let input = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (out, cache) = self.forward_batch(input)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Evaluate a batch (`batch x in_dim`) and keep every layer's activations.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        self.check_finite_params()?;

        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let scale = layer.activation.input_scale();
            let mut z = h.dot(&layer.weights.t());
            if scale != 1.0 {
                z.mapv_inplace(|v| v * scale);
            }
            z += &layer.biases;
            let a = z.mapv(|v| layer.activation.apply(v));
            pre.push(z);
            post.push(a.clone());
            h = a;
        }
        let cache = ForwardCache {
            param_id: self.param_id,
            inputs: x.to_owned(),
            pre_activations: pre,
            post_activations: post,
        };
        Ok((h, cache))
    }

    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Result<(MlpGradients, Vec<f64>)> {
        let g = ArrayView2::from_shape((1, grad_out.len()), grad_out)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (grads, gx) = self.backward_batch(cache, g)?;
        Ok((grads, gx.into_raw_vec_and_offset().0))
    }

    /// Backpropagate `grad_out` (`batch x out_dim`) through the cached pass.
    /// Parameter gradients are summed over the batch; the returned input
    /// gradient keeps one row per sample.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<'_, f64>,
    ) -> Result<(MlpGradients, Array2<f64>)> {
        if cache.param_id != self.param_id || cache.pre_activations.len() != self.layers.len() {
            return Err(Error::Contract(
                "forward cache was not produced by this network state".into(),
            ));
        }
        if grad_out.dim() != (cache.batch_size(), self.out_dim()) {
            return Err(Error::Shape(format!(
                "output gradient has shape {:?}, expected {:?}",
                grad_out.dim(),
                (cache.batch_size(), self.out_dim())
            )));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_activations[l];
            match layer.activation {
                Activation::Linear => {}
                act => delta.zip_mut_with(z, |d, &zv| *d *= act.derivative(zv)),
            }
            let h_prev = if l == 0 {
                &cache.inputs
            } else {
                &cache.post_activations[l - 1]
            };
            let scale = layer.activation.input_scale();
            let mut gw = delta.t().dot(h_prev);
            if scale != 1.0 {
                gw.mapv_inplace(|v| v * scale);
            }
            let gb = delta.sum_axis(Axis(0));
            let mut next = delta.dot(&layer.weights);
            if scale != 1.0 {
                next.mapv_inplace(|v| v * scale);
            }
            grads.push(LayerGradient {
                weights: gw,
                biases: gb,
            });
            delta = next;
        }
        grads.reverse();
        Ok((MlpGradients { layers: grads }, delta))
    }
}
