//! CurveNet: the weight-generating network.
//!
//! Maps a sample's normalized loss curve plus an embedded class label to a
//! scalar weight in (0,1):
//!
//! ```text
//! w = sigmoid(head(relu_encoder(curve) + embedding[label]))
//! ```
//!
//! The encoder is two ReLU-coupled dense layers `C -> H1 -> P`; the class
//! embedding is a `K x P` matrix fused with the curve feature by elementwise
//! sum; the head is `P -> H2 -> 1` with ReLU then sigmoid. The final head
//! layer starts at exactly zero, so an untrained CurveNet weights every
//! sample 0.5.

use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};

use crate::check::ParamVector;
use crate::fmath::{self, sigmoid};
use crate::nn::{Activation, Layer, LayerGrad};
use crate::rng::{seeded, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurveNetConfig {
    /// Curve feature width `C`.
    pub curve_len: usize,
    /// Class count `K`.
    pub num_classes: usize,
    /// Embedding width `P`.
    pub embed_dim: usize,
    /// Encoder hidden width `H1`.
    pub encoder_hidden: usize,
    /// Head hidden width `H2`.
    pub head_hidden: usize,
}

impl CurveNetConfig {
    /// Defaults: `P = 64`, `H1 = 128`, `H2 = 100`.
    pub fn new(curve_len: usize, num_classes: usize) -> Self {
        CurveNetConfig {
            curve_len,
            num_classes,
            embed_dim: 64,
            encoder_hidden: 128,
            head_hidden: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.curve_len == 0
            || self.num_classes == 0
            || self.embed_dim == 0
            || self.encoder_hidden == 0
            || self.head_hidden == 0
        {
            return Err(Error::Config("curvenet widths must all be positive".into()));
        }
        Ok(())
    }
}

/// CurveNet parameters (the meta-learned Θ).
#[derive(Debug, Clone, PartialEq)]
pub struct CurveNetParams {
    config: CurveNetConfig,
    enc1: Layer,
    enc2: Layer,
    /// Row-major `K x P` class-label embedding.
    embedding: Vec<f64>,
    head1: Layer,
    head2: Layer,
}

/// Gradient over Θ, shaped exactly like [`CurveNetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveNetGrad {
    pub enc1: LayerGrad,
    pub enc2: LayerGrad,
    pub embedding: Vec<f64>,
    pub head1: LayerGrad,
    pub head2: LayerGrad,
}

impl CurveNetGrad {
    fn zeros(config: &CurveNetConfig) -> Self {
        let lg = |in_dim: usize, out_dim: usize| LayerGrad {
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        };
        CurveNetGrad {
            enc1: lg(config.curve_len, config.encoder_hidden),
            enc2: lg(config.encoder_hidden, config.embed_dim),
            embedding: vec![0.0; config.num_classes * config.embed_dim],
            head1: lg(config.embed_dim, config.head_hidden),
            head2: lg(config.head_hidden, 1),
        }
    }

    /// Flat gradient blocks in the order of [`CurveNetParams::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        vec![
            &self.enc1.weights,
            &self.enc1.bias,
            &self.enc2.weights,
            &self.enc2.bias,
            &self.embedding,
            &self.head1.weights,
            &self.head1.bias,
            &self.head2.weights,
            &self.head2.bias,
        ]
    }
}

impl CurveNetParams {
    pub fn config(&self) -> &CurveNetConfig {
        &self.config
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    /// Flat parameter blocks: encoder, embedding, head, weights before biases.
    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.enc1.weights.as_mut_slice(),
            self.enc1.bias.as_mut_slice(),
            self.enc2.weights.as_mut_slice(),
            self.enc2.bias.as_mut_slice(),
            self.embedding.as_mut_slice(),
            self.head1.weights.as_mut_slice(),
            self.head1.bias.as_mut_slice(),
            self.head2.weights.as_mut_slice(),
            self.head2.bias.as_mut_slice(),
        ]
    }

    pub fn block_shapes(&self) -> Vec<usize> {
        vec![
            self.enc1.weights.len(),
            self.enc1.bias.len(),
            self.enc2.weights.len(),
            self.enc2.bias.len(),
            self.embedding.len(),
            self.head1.weights.len(),
            self.head1.bias.len(),
            self.head2.weights.len(),
            self.head2.bias.len(),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.block_shapes().iter().sum()
    }

    /// Raw (pre-sigmoid) head output for one sample, with the intermediate
    /// activations needed for backprop.
    fn forward_sample(&self, curve: &[f64], label: usize, scratch: &mut Scratch) -> f64 {
        self.enc1.forward_into(curve, &mut scratch.a1);
        self.enc2.forward_into(&scratch.a1, &mut scratch.a2);
        let p = self.config.embed_dim;
        let emb = &self.embedding[label * p..(label + 1) * p];
        for (f, (&a, &e)) in scratch.fused.iter_mut().zip(scratch.a2.iter().zip(emb)) {
            *f = a + e;
        }
        self.head1.forward_into(&scratch.fused, &mut scratch.a3);
        let mut z4 = [0.0];
        self.head2.forward_into(&scratch.a3, &mut z4);
        z4[0]
    }
}

struct Scratch {
    a1: Vec<f64>,
    a2: Vec<f64>,
    fused: Vec<f64>,
    a3: Vec<f64>,
}

impl Scratch {
    fn new(config: &CurveNetConfig) -> Self {
        Scratch {
            a1: vec![0.0; config.encoder_hidden],
            a2: vec![0.0; config.embed_dim],
            fused: vec![0.0; config.embed_dim],
            a3: vec![0.0; config.head_hidden],
        }
    }
}

/// Seeded CurveNet initialization.
///
/// Encoder and first head layer get fan-in-scaled uniform weights; embedding
/// rows likewise (fan-in `K`); the final head layer is exactly zero so the
/// initial output is `sigmoid(0) = 0.5` for every input.
pub fn init_curvenet(config: &CurveNetConfig, seed: u64) -> Result<CurveNetParams> {
    config.validate()?;
    let mut rng = seeded(seed, Stream::WeightNetInit);
    let enc1 = Layer::he_uniform(
        config.curve_len,
        config.encoder_hidden,
        Activation::Relu,
        &mut rng,
    );
    let enc2 = Layer::he_uniform(
        config.encoder_hidden,
        config.embed_dim,
        Activation::Relu,
        &mut rng,
    );
    let mut embedding = vec![0.0; config.num_classes * config.embed_dim];
    let limit = fmath::sqrt(6.0 / config.num_classes as f64);
    let dist = Uniform::new(-limit, limit);
    for v in &mut embedding {
        *v = dist.sample(&mut rng);
    }
    let head1 = Layer::he_uniform(
        config.embed_dim,
        config.head_hidden,
        Activation::Relu,
        &mut rng,
    );
    let head2 = Layer::zeros(config.head_hidden, 1, Activation::Identity);
    Ok(CurveNetParams {
        config: config.clone(),
        enc1,
        enc2,
        embedding,
        head1,
        head2,
    })
}

/// Per-sample weights `w_i = sigmoid(head(encoder(I_i) + Y[label_i]))`,
/// each strictly inside (0,1).
pub fn curvenet_forward(
    params: &CurveNetParams,
    curves: &[f64],
    labels: &[usize],
) -> Result<Vec<f64>> {
    let c = params.config.curve_len;
    if curves.len() != labels.len() * c {
        return Err(Error::Config(alloc::format!(
            "curve matrix of {} entries does not match {} labels x width {c}",
            curves.len(),
            labels.len()
        )));
    }
    let mut scratch = Scratch::new(&params.config);
    let mut out = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        if label >= params.config.num_classes {
            return Err(Error::Domain(alloc::format!(
                "label {label} out of range for {} classes",
                params.config.num_classes
            )));
        }
        let z = params.forward_sample(&curves[i * c..(i + 1) * c], label, &mut scratch);
        out.push(sigmoid(z));
    }
    Ok(out)
}

/// Gradient of `Σ_i upstream_i * G(I_i, label_i | Θ)` with respect to Θ.
///
/// Embedding rows of classes absent from the batch stay exactly zero.
pub fn curvenet_param_grad(
    params: &CurveNetParams,
    curves: &[f64],
    labels: &[usize],
    upstream: &[f64],
) -> Result<CurveNetGrad> {
    let c = params.config.curve_len;
    if curves.len() != labels.len() * c || upstream.len() != labels.len() {
        return Err(Error::Config(
            "gradient input lengths are inconsistent".into(),
        ));
    }
    if upstream.iter().any(|u| !u.is_finite()) {
        return Err(Error::Numeric {
            layer: None,
            what: "upstream coefficients".into(),
        });
    }
    let cfg = &params.config;
    let mut grad = CurveNetGrad::zeros(cfg);
    let mut scratch = Scratch::new(cfg);
    let mut d3 = vec![0.0; cfg.head_hidden];
    let mut df = vec![0.0; cfg.embed_dim];
    let mut d2 = vec![0.0; cfg.embed_dim];
    let mut d1 = vec![0.0; cfg.encoder_hidden];

    for (i, (&label, &u)) in labels.iter().zip(upstream).enumerate() {
        if label >= cfg.num_classes {
            return Err(Error::Domain(alloc::format!(
                "label {label} out of range for {} classes",
                cfg.num_classes
            )));
        }
        if u == 0.0 {
            continue;
        }
        let curve = &curves[i * c..(i + 1) * c];
        let z4 = params.forward_sample(curve, label, &mut scratch);
        let w = sigmoid(z4);
        let d4 = u * w * (1.0 - w);

        // head2: 1 x H2.
        for (gw, &a) in grad.head2.weights.iter_mut().zip(&scratch.a3) {
            *gw += d4 * a;
        }
        grad.head2.bias[0] += d4;

        // head1.
        for (j, d) in d3.iter_mut().enumerate() {
            *d = params.head2.weights[j] * d4 * Activation::Relu.grad_from_output(scratch.a3[j]);
        }
        for (o, &dz) in d3.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grad.head1.bias[o] += dz;
            let row = &mut grad.head1.weights[o * cfg.embed_dim..(o + 1) * cfg.embed_dim];
            for (gw, &f) in row.iter_mut().zip(&scratch.fused) {
                *gw += dz * f;
            }
        }

        // Fused sum splits into the embedding row and the encoder output.
        df.fill(0.0);
        for (o, &dz) in d3.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let row = &params.head1.weights[o * cfg.embed_dim..(o + 1) * cfg.embed_dim];
            for (d, &w) in df.iter_mut().zip(row) {
                *d += w * dz;
            }
        }
        let emb_row = &mut grad.embedding[label * cfg.embed_dim..(label + 1) * cfg.embed_dim];
        for (g, &d) in emb_row.iter_mut().zip(&df) {
            *g += d;
        }

        // enc2.
        for (j, d) in d2.iter_mut().enumerate() {
            *d = df[j] * Activation::Relu.grad_from_output(scratch.a2[j]);
        }
        for (o, &dz) in d2.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grad.enc2.bias[o] += dz;
            let row = &mut grad.enc2.weights[o * cfg.encoder_hidden..(o + 1) * cfg.encoder_hidden];
            for (gw, &a) in row.iter_mut().zip(&scratch.a1) {
                *gw += dz * a;
            }
        }

        // enc1.
        d1.fill(0.0);
        for (o, &dz) in d2.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let row = &params.enc2.weights[o * cfg.encoder_hidden..(o + 1) * cfg.encoder_hidden];
            for (d, &w) in d1.iter_mut().zip(row) {
                *d += w * dz;
            }
        }
        for (j, d) in d1.iter_mut().enumerate() {
            *d *= Activation::Relu.grad_from_output(scratch.a1[j]);
        }
        for (o, &dz) in d1.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grad.enc1.bias[o] += dz;
            let row = &mut grad.enc1.weights[o * c..(o + 1) * c];
            for (gw, &x) in row.iter_mut().zip(curve) {
                *gw += dz * x;
            }
        }
    }
    Ok(grad)
}

impl ParamVector for CurveNetParams {
    fn param_count(&self) -> usize {
        CurveNetParams::param_count(self)
    }

    fn param(&self, idx: usize) -> f64 {
        let (block, offset) = self.locate(idx);
        self.block_ref(block)[offset]
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        let (block, offset) = self.locate(idx);
        self.param_blocks_mut()[block][offset] = value;
    }
}

impl CurveNetParams {
    fn locate(&self, mut idx: usize) -> (usize, usize) {
        for (b, n) in self.block_shapes().into_iter().enumerate() {
            if idx < n {
                return (b, idx);
            }
            idx -= n;
        }
        panic!("curvenet parameter index out of range");
    }

    fn block_ref(&self, block: usize) -> &[f64] {
        match block {
            0 => &self.enc1.weights,
            1 => &self.enc1.bias,
            2 => &self.enc2.weights,
            3 => &self.enc2.bias,
            4 => &self.embedding,
            5 => &self.head1.weights,
            6 => &self.head1.bias,
            7 => &self.head2.weights,
            8 => &self.head2.bias,
            _ => panic!("curvenet block index out of range"),
        }
    }
}
