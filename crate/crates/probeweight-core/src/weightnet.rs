//! Sample-weight sources for the allocating stage.
//!
//! The bilevel loop is generic over where per-sample weights come from:
//!
//! - [`WeightNet::Constant`]: a fixed weight (1.0 recovers plain CE training).
//! - [`WeightNet::Curve`]: CurveNet over stored normalized loss curves.
//! - [`WeightNet::Transient`]: the loss-to-weight MLP baseline, fed each
//!   sample's current (transient) loss instead of its curve.
//!
//! All variants expose the same forward / parameter-gradient / block surface,
//! so the meta-gradient machinery is shared with only the input features
//! swapped.

use alloc::vec;
use alloc::vec::Vec;

use crate::check::ParamVector;
use crate::curvenet::{curvenet_forward, curvenet_param_grad, CurveNetParams};
use crate::fmath::sigmoid;
use crate::nn::{Activation, Layer, LayerGrad};
use crate::rng::{seeded, Stream};
use crate::{Error, Result};

/// What a weight source consumes per train sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Stored normalized loss curves (width `C`), plus the observed label.
    Curves,
    /// The sample's current loss at the pre-update classifier (width 1).
    TransientLoss,
    /// Nothing; the weight is constant.
    None,
}

/// A borrowed `B x width` feature matrix for one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRows<'a> {
    pub rows: &'a [f64],
    pub width: usize,
}

impl<'a> FeatureRows<'a> {
    pub fn empty() -> Self {
        FeatureRows {
            rows: &[],
            width: 0,
        }
    }
}

/// The loss-to-weight MLP baseline: `1 -> hidden -> 1`, ReLU then sigmoid.
///
/// With the default 100 hidden nodes it has exactly 301 parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientNet {
    hidden: Layer,
    out: Layer,
}

impl TransientNet {
    /// Seeded init: fan-in-scaled hidden layer, zero output layer (so the
    /// untrained net weights every sample 0.5, like CurveNet).
    pub fn init(hidden_width: usize, seed: u64) -> Result<Self> {
        if hidden_width == 0 {
            return Err(Error::Config("transient net needs a hidden layer".into()));
        }
        let mut rng = seeded(seed, Stream::WeightNetInit);
        Ok(TransientNet {
            hidden: Layer::he_uniform(1, hidden_width, Activation::Relu, &mut rng),
            out: Layer::zeros(hidden_width, 1, Activation::Identity),
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.hidden.weights.len()
            + self.hidden.bias.len()
            + self.out.weights.len()
            + self.out.bias.len()
    }

    pub fn forward(&self, losses: &[f64]) -> Result<Vec<f64>> {
        let h = self.hidden.out_dim;
        let mut a1 = vec![0.0; h];
        let mut out = Vec::with_capacity(losses.len());
        for &l in losses {
            if !l.is_finite() {
                return Err(Error::Numeric {
                    layer: None,
                    what: "transient loss input".into(),
                });
            }
            self.hidden.forward_into(&[l], &mut a1);
            let mut z = [0.0];
            self.out.forward_into(&a1, &mut z);
            out.push(sigmoid(z[0]));
        }
        Ok(out)
    }

    /// Gradient of `Σ_i upstream_i * T(loss_i)` over the net's parameters,
    /// as blocks `[hidden.w, hidden.b, out.w, out.b]`.
    pub fn param_grad(&self, losses: &[f64], upstream: &[f64]) -> Result<Vec<Vec<f64>>> {
        if losses.len() != upstream.len() {
            return Err(Error::Config("upstream length does not match batch".into()));
        }
        let h = self.hidden.out_dim;
        let mut gh = LayerGrad {
            weights: vec![0.0; h],
            bias: vec![0.0; h],
        };
        let mut go = LayerGrad {
            weights: vec![0.0; h],
            bias: vec![0.0; 1],
        };
        let mut a1 = vec![0.0; h];
        for (&l, &u) in losses.iter().zip(upstream) {
            if !u.is_finite() {
                return Err(Error::Numeric {
                    layer: None,
                    what: "upstream coefficients".into(),
                });
            }
            if u == 0.0 {
                continue;
            }
            self.hidden.forward_into(&[l], &mut a1);
            let mut z = [0.0];
            self.out.forward_into(&a1, &mut z);
            let w = sigmoid(z[0]);
            let d_out = u * w * (1.0 - w);
            go.bias[0] += d_out;
            for (g, &a) in go.weights.iter_mut().zip(&a1) {
                *g += d_out * a;
            }
            for (((&a, &w_out), gb), gw) in a1
                .iter()
                .zip(&self.out.weights)
                .zip(gh.bias.iter_mut())
                .zip(gh.weights.iter_mut())
            {
                let dz = w_out * d_out * Activation::Relu.grad_from_output(a);
                *gb += dz;
                *gw += dz * l;
            }
        }
        Ok(vec![gh.weights, gh.bias, go.weights, go.bias])
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.hidden.weights.as_mut_slice(),
            self.hidden.bias.as_mut_slice(),
            self.out.weights.as_mut_slice(),
            self.out.bias.as_mut_slice(),
        ]
    }

    pub fn block_shapes(&self) -> Vec<usize> {
        vec![
            self.hidden.weights.len(),
            self.hidden.bias.len(),
            self.out.weights.len(),
            self.out.bias.len(),
        ]
    }
}

/// A weight source for the allocating loop.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // the inline headers are small next to the heap-backed params
pub enum WeightNet {
    Constant(f64),
    Curve(CurveNetParams),
    Transient(TransientNet),
}

impl WeightNet {
    pub fn feature_kind(&self) -> FeatureKind {
        match self {
            WeightNet::Constant(_) => FeatureKind::None,
            WeightNet::Curve(_) => FeatureKind::Curves,
            WeightNet::Transient(_) => FeatureKind::TransientLoss,
        }
    }

    /// Expected feature width per sample.
    pub fn feature_width(&self) -> usize {
        match self {
            WeightNet::Constant(_) => 0,
            WeightNet::Curve(p) => p.config().curve_len,
            WeightNet::Transient(_) => 1,
        }
    }

    /// Whether this source has parameters to meta-learn.
    pub fn is_learnable(&self) -> bool {
        !matches!(self, WeightNet::Constant(_))
    }

    pub fn forward(&self, features: FeatureRows, labels: &[usize]) -> Result<Vec<f64>> {
        match self {
            WeightNet::Constant(c) => Ok(vec![*c; labels.len()]),
            WeightNet::Curve(p) => curvenet_forward(p, features.rows, labels),
            WeightNet::Transient(t) => t.forward(features.rows),
        }
    }

    /// Gradient blocks of `Σ_i upstream_i * w_i(Θ)`, matching
    /// [`WeightNet::block_shapes`]. Empty for the constant source.
    pub fn param_grad(
        &self,
        features: FeatureRows,
        labels: &[usize],
        upstream: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        match self {
            WeightNet::Constant(_) => Ok(Vec::new()),
            WeightNet::Curve(p) => {
                let grad = curvenet_param_grad(p, features.rows, labels, upstream)?;
                Ok(grad.blocks().into_iter().map(|b| b.to_vec()).collect())
            }
            WeightNet::Transient(t) => t.param_grad(features.rows, upstream),
        }
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            WeightNet::Constant(_) => Vec::new(),
            WeightNet::Curve(p) => p.param_blocks_mut(),
            WeightNet::Transient(t) => t.param_blocks_mut(),
        }
    }

    pub fn block_shapes(&self) -> Vec<usize> {
        match self {
            WeightNet::Constant(_) => Vec::new(),
            WeightNet::Curve(p) => p.block_shapes(),
            WeightNet::Transient(t) => t.block_shapes(),
        }
    }
}

impl ParamVector for TransientNet {
    fn param_count(&self) -> usize {
        TransientNet::param_count(self)
    }

    fn param(&self, idx: usize) -> f64 {
        let h = self.hidden.out_dim;
        if idx < h {
            self.hidden.weights[idx]
        } else if idx < 2 * h {
            self.hidden.bias[idx - h]
        } else if idx < 3 * h {
            self.out.weights[idx - 2 * h]
        } else {
            self.out.bias[idx - 3 * h]
        }
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        let h = self.hidden.out_dim;
        if idx < h {
            self.hidden.weights[idx] = value;
        } else if idx < 2 * h {
            self.hidden.bias[idx - h] = value;
        } else if idx < 3 * h {
            self.out.weights[idx - 2 * h] = value;
        } else {
            self.out.bias[idx - 3 * h] = value;
        }
    }
}

impl ParamVector for WeightNet {
    fn param_count(&self) -> usize {
        match self {
            WeightNet::Constant(_) => 0,
            WeightNet::Curve(p) => ParamVector::param_count(p),
            WeightNet::Transient(t) => ParamVector::param_count(t),
        }
    }

    fn param(&self, idx: usize) -> f64 {
        match self {
            WeightNet::Constant(_) => panic!("constant weight source has no parameters"),
            WeightNet::Curve(p) => p.param(idx),
            WeightNet::Transient(t) => t.param(idx),
        }
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        match self {
            WeightNet::Constant(_) => panic!("constant weight source has no parameters"),
            WeightNet::Curve(p) => p.set_param(idx, value),
            WeightNet::Transient(t) => t.set_param(idx, value),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{finite_diff_flat, max_relative_error};
    use rand::Rng;

    #[test]
    fn default_transient_net_has_301_parameters() {
        let net = TransientNet::init(100, 0).unwrap();
        assert_eq!(net.param_count(), 301);
    }

    #[test]
    fn transient_init_weights_everything_half() {
        let net = TransientNet::init(100, 5).unwrap();
        let w = net.forward(&[0.0, 0.7, 3.5]).unwrap();
        assert_eq!(w, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn transient_grad_matches_finite_differences() {
        let mut net = TransientNet::init(8, 3).unwrap();
        let mut rng = seeded(77, Stream::WeightNetInit);
        for i in 0..ParamVector::param_count(&net) {
            net.set_param(i, rng.gen_range(-0.9..0.9));
        }
        let losses = [0.2, 1.7, 0.05, 2.4];
        let upstream = [1.0, -0.5, 0.25, 0.8];
        let analytic: Vec<f64> = net
            .param_grad(&losses, &upstream)
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        let numeric = finite_diff_flat(
            |n: &TransientNet| {
                let w = n.forward(&losses).unwrap();
                w.iter().zip(&upstream).map(|(wi, ui)| wi * ui).sum()
            },
            &mut net,
            1e-4,
        )
        .unwrap();
        assert!(max_relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn constant_source_has_no_learnable_surface() {
        let net = WeightNet::Constant(1.0);
        assert!(!net.is_learnable());
        assert_eq!(net.block_shapes(), Vec::<usize>::new());
        let w = net.forward(FeatureRows::empty(), &[0, 1, 2]).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
        let g = net
            .param_grad(FeatureRows::empty(), &[0, 1, 2], &[1.0, 1.0, 1.0])
            .unwrap();
        assert!(g.is_empty());
    }
}
