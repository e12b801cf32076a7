//! Dense-network computation core.
//!
//! A fixed, hand-differentiated computation set over multilayer perceptrons:
//! batched forward passes, per-sample softmax cross-entropy, weighted batch
//! gradients, and per-sample gradient inner products (the building block of
//! skip-layer meta optimization). Everything is `f64` and deterministic;
//! identical inputs give bitwise-identical outputs.
//!
//! Layer indexing is bottom-up: layer 0 consumes the input features. "Skipping
//! the bottom `SL` layers" therefore means restricting a layerwise sum to
//! indices `>= SL`.

use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::fmath;
use crate::{Error, Result};

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn forward(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the post-activation value.
    ///
    /// Valid for ReLU (output > 0 iff the unit was active; the subgradient at
    /// exactly 0 is taken as 0) and trivially for identity.
    #[inline]
    pub(crate) fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `y = activation(W x + b)`, weights row-major `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Layer {
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
            in_dim,
            out_dim,
        }
    }

    /// He-uniform weights (`±sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layer = Layer::zeros(in_dim, out_dim, activation);
        let limit = fmath::sqrt(6.0 / in_dim as f64);
        let dist = Uniform::new(-limit, limit);
        for w in &mut layer.weights {
            *w = dist.sample(rng);
        }
        layer
    }

    /// `out = activation(W x + b)` for a single sample.
    #[inline]
    pub(crate) fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut sum = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                sum += w * x;
            }
            *out_v = self.activation.forward(sum);
        }
    }
}

/// Dense multilayer classifier parameters, layer-indexed from the input side.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Builds a classifier over `dims = [d, h_1, ..., K]` with ReLU hidden
    /// layers and identity logits, He-uniform weights.
    ///
    /// Errors if fewer than two layers would result (`dims.len() < 3`).
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::Config(alloc::format!(
                "classifier needs at least one hidden layer, got dims of length {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let act = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(Layer::he_uniform(dims[i], dims[i + 1], act, rng));
        }
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Config("classifier needs at least two layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape {
                    layer: i + 1,
                    expected: pair[0].out_dim,
                    got: pair[1].in_dim,
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Number of layers `Z`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Output width (class count for a classifier).
    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Flat parameter slices in layer order: `[w0, b0, w1, b1, ...]`.
    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            blocks.push(layer.weights.as_mut_slice());
            blocks.push(layer.bias.as_mut_slice());
        }
        blocks
    }

    /// Block lengths matching [`Mlp::param_blocks_mut`], for optimizer setup.
    pub fn block_shapes(&self) -> Vec<usize> {
        let mut shapes = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            shapes.push(layer.weights.len());
            shapes.push(layer.bias.len());
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

/// A minibatch view: `B` rows of `input_dim` features plus class labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub labels: &'a [usize],
    pub input_dim: usize,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a [f64], labels: &'a [usize], input_dim: usize) -> Result<Self> {
        if input_dim == 0 || inputs.len() != labels.len() * input_dim {
            return Err(Error::Config(alloc::format!(
                "batch of {} labels needs {} features, got {}",
                labels.len(),
                labels.len() * input_dim,
                inputs.len()
            )));
        }
        Ok(Batch {
            inputs,
            labels,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

/// Per-layer gradients matching an [`Mlp`]'s shapes.
///
/// Scale convention throughout the crate: the gradient of
/// `(1/B) * Σ_i c_i * l_i` for per-sample coefficients `c_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros_like(params: &Mlp) -> Self {
        GradientBundle {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, params: &Mlp) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }

    /// Flat gradient slices in the same order as [`Mlp::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut blocks = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            blocks.push(layer.weights.as_slice());
            blocks.push(layer.bias.as_slice());
        }
        blocks
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for l in &self.layers {
            for &v in l.weights.iter().chain(l.bias.iter()) {
                let a = fmath::abs(v);
                if a > m {
                    m = a;
                }
            }
        }
        m
    }
}

/// Forward activations kept for backpropagation.
///
/// `activations[0]` is the input batch; `activations[l + 1]` holds layer `l`'s
/// post-activation outputs, row-major `B x out_dim`.
pub(crate) struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    #[inline]
    pub fn layer_input(&self, layer: usize) -> &[f64] {
        &self.activations[layer]
    }

    pub fn logits(&self) -> &[f64] {
        &self.activations[self.activations.len() - 1]
    }
}

pub(crate) fn forward_trace(params: &Mlp, batch: &Batch) -> Result<ForwardTrace> {
    if batch.is_empty() {
        return Err(Error::Config("batch must be nonempty".into()));
    }
    if batch.input_dim != params.input_dim() {
        return Err(Error::Shape {
            layer: 0,
            expected: params.input_dim(),
            got: batch.input_dim,
        });
    }
    let b = batch.len();
    let mut activations = Vec::with_capacity(params.layers.len() + 1);
    activations.push(batch.inputs.to_vec());
    for (li, layer) in params.layers.iter().enumerate() {
        let prev = &activations[li];
        let mut out = vec![0.0; b * layer.out_dim];
        for i in 0..b {
            layer.forward_into(
                &prev[i * layer.in_dim..(i + 1) * layer.in_dim],
                &mut out[i * layer.out_dim..(i + 1) * layer.out_dim],
            );
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: Some(li),
                what: "activation".into(),
            });
        }
        activations.push(out);
    }
    Ok(ForwardTrace { activations })
}

/// Raw logits (no softmax) for a batch: `B x K` row-major.
pub fn forward_logits(params: &Mlp, batch: &Batch) -> Result<Vec<f64>> {
    let trace = forward_trace(params, batch)?;
    Ok(trace.activations.into_iter().next_back().unwrap())
}

/// Per-sample softmax cross-entropy from raw logits.
///
/// Computed as `logsumexp(z) - z_label`, which is nonnegative by construction.
pub fn per_sample_loss(logits: &[f64], labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if num_classes == 0 || logits.len() != labels.len() * num_classes {
        return Err(Error::Config(alloc::format!(
            "logit matrix of {} entries does not match {} labels x {} classes",
            logits.len(),
            labels.len(),
            num_classes
        )));
    }
    let mut losses = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::Domain(alloc::format!(
                "label {label} out of range for {num_classes} classes (sample {i})"
            )));
        }
        let row = &logits[i * num_classes..(i + 1) * num_classes];
        losses.push(log_sum_exp(row) - row[label]);
    }
    Ok(losses)
}

#[inline]
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m });
    let mut sum = 0.0;
    for &v in row {
        sum += fmath::exp(v - max);
    }
    max + fmath::ln(sum)
}

/// Writes `softmax(row) - onehot(label)` into `out`: the gradient of the
/// sample's cross-entropy with respect to its logits.
#[inline]
pub(crate) fn softmax_delta(row: &[f64], label: usize, out: &mut [f64]) {
    let max = row
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m });
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = fmath::exp(v - max);
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    out[label] -= 1.0;
}

/// Gradient of `(1/B) * Σ_i weights_i * l_i` with respect to all parameters.
pub fn weighted_grad(params: &Mlp, batch: &Batch, weights: &[f64]) -> Result<GradientBundle> {
    if weights.len() != batch.len() {
        return Err(Error::Config(alloc::format!(
            "{} weights for a batch of {}",
            weights.len(),
            batch.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric {
            layer: None,
            what: "sample weights".into(),
        });
    }
    let trace = forward_trace(params, batch)?;
    backward_weighted(params, batch, &trace, weights)
}

/// Backward pass reusing an existing forward trace at the same parameters.
pub(crate) fn backward_weighted(
    params: &Mlp,
    batch: &Batch,
    trace: &ForwardTrace,
    weights: &[f64],
) -> Result<GradientBundle> {
    let b = batch.len();
    let k = params.output_dim();
    let depth = params.depth();
    let inv_b = 1.0 / b as f64;
    let mut grad = GradientBundle::zeros_like(params);

    // delta holds dL/dz for the current layer, all samples.
    let logits = trace.logits();
    let mut delta = vec![0.0; b * k];
    for i in 0..b {
        let row = &logits[i * k..(i + 1) * k];
        let out = &mut delta[i * k..(i + 1) * k];
        softmax_delta(row, batch.labels[i], out);
        let scale = weights[i] * inv_b;
        for v in out.iter_mut() {
            *v *= scale;
        }
    }

    for li in (0..depth).rev() {
        let layer = &params.layers[li];
        let inputs = trace.layer_input(li);
        let lg = &mut grad.layers[li];
        for i in 0..b {
            let d = &delta[i * layer.out_dim..(i + 1) * layer.out_dim];
            let x = &inputs[i * layer.in_dim..(i + 1) * layer.in_dim];
            for (o, &dz) in d.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                lg.bias[o] += dz;
                let wrow = &mut lg.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, &xv) in wrow.iter_mut().zip(x) {
                    *gw += dz * xv;
                }
            }
        }
        if li > 0 {
            // delta for the layer below: (W^T delta) ∘ act'(a).
            let below = &params.layers[li - 1];
            let mut next_delta = vec![0.0; b * layer.in_dim];
            for i in 0..b {
                let d = &delta[i * layer.out_dim..(i + 1) * layer.out_dim];
                let nd = &mut next_delta[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (o, &dz) in d.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (ndv, &w) in nd.iter_mut().zip(wrow) {
                        *ndv += w * dz;
                    }
                }
                let a = &inputs[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (ndv, &av) in nd.iter_mut().zip(a) {
                    *ndv *= below.activation.grad_from_output(av);
                }
            }
            delta = next_delta;
        }
    }
    Ok(grad)
}

/// Per-sample gradient inner products against a fixed gradient direction,
/// restricted to layers `>= skip_layers`.
///
/// Returns `s_i = Σ_{l >= SL} <∇_{w_l} l_i(params), meta_grad_l>` where `l_i`
/// is sample `i`'s (unweighted, unscaled) cross-entropy. `SL = Z` yields an
/// empty layer set and exact zeros. The backward sweep stops at layer `SL`;
/// frozen bottom layers cost nothing.
pub fn per_sample_grad_dots(
    params: &Mlp,
    batch: &Batch,
    meta_grad: &GradientBundle,
    skip_layers: usize,
) -> Result<Vec<f64>> {
    let trace = forward_trace(params, batch)?;
    grad_dots_from_trace(params, batch, &trace, meta_grad, skip_layers)
}

pub(crate) fn grad_dots_from_trace(
    params: &Mlp,
    batch: &Batch,
    trace: &ForwardTrace,
    meta_grad: &GradientBundle,
    skip_layers: usize,
) -> Result<Vec<f64>> {
    let depth = params.depth();
    if skip_layers > depth {
        return Err(Error::Domain(alloc::format!(
            "skip_layers {skip_layers} out of range for a {depth}-layer classifier"
        )));
    }
    if !meta_grad.matches(params) {
        return Err(Error::Config(
            "meta gradient shapes do not match classifier".into(),
        ));
    }
    let b = batch.len();
    if skip_layers == depth {
        return Ok(vec![0.0; b]);
    }

    let k = params.output_dim();
    let logits = trace.logits();
    let mut dots = Vec::with_capacity(b);
    let width_max = params
        .layers
        .iter()
        .map(|l| l.out_dim.max(l.in_dim))
        .max()
        .unwrap();
    let mut delta = vec![0.0; width_max];
    let mut delta_next = vec![0.0; width_max];

    for i in 0..b {
        softmax_delta(
            &logits[i * k..(i + 1) * k],
            batch.labels[i],
            &mut delta[..k],
        );
        let mut s = 0.0;
        for li in (skip_layers..depth).rev() {
            let layer = &params.layers[li];
            let d = &delta[..layer.out_dim];
            let x = &trace.layer_input(li)[i * layer.in_dim..(i + 1) * layer.in_dim];
            let mg = &meta_grad.layers[li];
            // <delta ⊗ x, G_w> + <delta, G_b>, without materializing the outer product.
            for (o, &dz) in d.iter().enumerate() {
                let grow = &mg.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut acc = mg.bias[o];
                for (&g, &xv) in grow.iter().zip(x) {
                    acc += g * xv;
                }
                s += dz * acc;
            }
            if li > skip_layers {
                let nd = &mut delta_next[..layer.in_dim];
                nd.fill(0.0);
                for (o, &dz) in d.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (ndv, &w) in nd.iter_mut().zip(wrow) {
                        *ndv += w * dz;
                    }
                }
                let below = &params.layers[li - 1];
                for (ndv, &av) in nd.iter_mut().zip(x) {
                    *ndv *= below.activation.grad_from_output(av);
                }
                core::mem::swap(&mut delta, &mut delta_next);
            }
        }
        if !s.is_finite() {
            return Err(Error::Numeric {
                layer: None,
                what: alloc::format!("gradient inner product for sample {i}"),
            });
        }
        dots.push(s);
    }
    Ok(dots)
}
