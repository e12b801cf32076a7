//! Finite-difference gradient verification.
//!
//! The central-difference estimator here is the independent oracle every
//! analytic gradient in this crate is tested against. It only ever evaluates
//! the objective as a black box, so it shares no code with the backward
//! passes it checks.

use alloc::vec::Vec;

use crate::nn::{GradientBundle, LayerGrad, Mlp};
use crate::{Error, Result};

/// Flat coordinate access to a parameter collection.
///
/// Index order is implementation-defined but stable; it is only required to
/// enumerate every scalar exactly once.
pub trait ParamVector {
    fn param_count(&self) -> usize;
    fn param(&self, idx: usize) -> f64;
    fn set_param(&mut self, idx: usize, value: f64);
}

impl ParamVector for Mlp {
    fn param_count(&self) -> usize {
        Mlp::param_count(self)
    }

    fn param(&self, idx: usize) -> f64 {
        let (layer, offset) = locate(self, idx);
        let l = &self.layers()[layer];
        if offset < l.weights.len() {
            l.weights[offset]
        } else {
            l.bias[offset - l.weights.len()]
        }
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        let (layer, offset) = locate(self, idx);
        let l = &mut self.layers_mut()[layer];
        if offset < l.weights.len() {
            l.weights[offset] = value;
        } else {
            let w = l.weights.len();
            l.bias[offset - w] = value;
        }
    }
}

fn locate(net: &Mlp, mut idx: usize) -> (usize, usize) {
    for (li, l) in net.layers().iter().enumerate() {
        let n = l.weights.len() + l.bias.len();
        if idx < n {
            return (li, idx);
        }
        idx -= n;
    }
    panic!("parameter index out of range");
}

/// Central-difference gradient of `objective` over every coordinate of
/// `params`: `(f(p + h e_i) - f(p - h e_i)) / 2h`.
///
/// `params` is restored to its original values before returning.
pub fn finite_diff_flat<P, F>(mut objective: F, params: &mut P, h: f64) -> Result<Vec<f64>>
where
    P: ParamVector,
    F: FnMut(&P) -> f64,
{
    if h <= 0.0 || h.is_nan() {
        return Err(Error::Config(
            "finite-difference step h must be positive".into(),
        ));
    }
    let n = params.param_count();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let orig = params.param(i);
        params.set_param(i, orig + h);
        let plus = objective(params);
        params.set_param(i, orig - h);
        let minus = objective(params);
        params.set_param(i, orig);
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Central-difference gradient of a scalar objective over classifier
/// parameters, shaped as a [`GradientBundle`].
pub fn finite_diff_grad<F>(objective: F, params: &mut Mlp, h: f64) -> Result<GradientBundle>
where
    F: FnMut(&Mlp) -> f64,
{
    let flat = finite_diff_flat(objective, params, h)?;
    let mut layers = Vec::with_capacity(params.depth());
    let mut cursor = 0;
    for l in params.layers() {
        let wn = l.weights.len();
        let bn = l.bias.len();
        layers.push(LayerGrad {
            weights: flat[cursor..cursor + wn].to_vec(),
            bias: flat[cursor + wn..cursor + wn + bn].to_vec(),
        });
        cursor += wn + bn;
    }
    Ok(GradientBundle { layers })
}

/// Largest relative error between an analytic gradient and its
/// finite-difference estimate, with a unit floor on the denominator scale.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs()).max(1.0);
        let rel = (a - n).abs() / scale;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}
