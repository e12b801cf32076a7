//! SGD and Adam over flat parameter blocks.
//!
//! Both the classifier (ω) and the weight nets (Θ) expose their parameters as
//! ordered `&mut [f64]` blocks, so one optimizer implementation serves both.
//! Moment buffers are allocated up front from the block shapes and always
//! mirror the parameters exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd(SgdState),
    Adam(AdamState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub lr: f64,
    momentum: Option<Momentum>,
}

#[derive(Debug, Clone, PartialEq)]
struct Momentum {
    mu: f64,
    velocity: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// Plain SGD: `p <- p - lr * g`.
    pub fn sgd(lr: f64) -> Result<Self> {
        check_lr(lr)?;
        Ok(OptimizerState::Sgd(SgdState { lr, momentum: None }))
    }

    /// SGD with heavy-ball momentum `mu`.
    pub fn sgd_momentum(lr: f64, mu: f64, block_shapes: &[usize]) -> Result<Self> {
        check_lr(lr)?;
        Ok(OptimizerState::Sgd(SgdState {
            lr,
            momentum: Some(Momentum {
                mu,
                velocity: zeros(block_shapes),
            }),
        }))
    }

    /// Bias-corrected Adam with the usual defaults (β1=0.9, β2=0.999, ε=1e-8).
    pub fn adam(lr: f64, block_shapes: &[usize]) -> Result<Self> {
        check_lr(lr)?;
        Ok(OptimizerState::Adam(AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(block_shapes),
            v: zeros(block_shapes),
        }))
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerState::Sgd(s) => s.lr,
            OptimizerState::Adam(a) => a.lr,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            OptimizerState::Sgd(s) => s.lr = lr,
            OptimizerState::Adam(a) => a.lr = lr,
        }
    }

    /// Adam step counter; 0 for SGD.
    pub fn step_count(&self) -> u64 {
        match self {
            OptimizerState::Sgd(_) => 0,
            OptimizerState::Adam(a) => a.step,
        }
    }

    /// Applies one update in place. `params` and `grads` must be the blocks
    /// the state was created for, in the same order.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(Error::Config(
                "optimizer blocks do not match gradients".into(),
            ));
        }
        for g in grads {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: None,
                    what: "gradient passed to optimizer".into(),
                });
            }
        }
        match self {
            OptimizerState::Sgd(state) => {
                match &mut state.momentum {
                    None => {
                        for (p, g) in params.iter_mut().zip(grads) {
                            for (pv, gv) in p.iter_mut().zip(*g) {
                                *pv -= state.lr * gv;
                            }
                        }
                    }
                    Some(mom) => {
                        if mom.velocity.len() != params.len() {
                            return Err(Error::Config(
                                "momentum buffers do not match blocks".into(),
                            ));
                        }
                        for ((p, g), vel) in params.iter_mut().zip(grads).zip(&mut mom.velocity) {
                            for ((pv, gv), vv) in p.iter_mut().zip(*g).zip(vel.iter_mut()) {
                                *vv = mom.mu * *vv + gv;
                                *pv -= state.lr * *vv;
                            }
                        }
                    }
                }
                Ok(())
            }
            OptimizerState::Adam(state) => {
                if state.m.len() != params.len() {
                    return Err(Error::Config("adam moments do not match blocks".into()));
                }
                state.step += 1;
                let t = state.step as f64;
                let bc1 = 1.0 - fmath::powf(state.beta1, t);
                let bc2 = 1.0 - fmath::powf(state.beta2, t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut state.m)
                    .zip(&mut state.v)
                {
                    for (((pv, gv), mv), vv) in
                        p.iter_mut().zip(*g).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mv = state.beta1 * *mv + (1.0 - state.beta1) * gv;
                        *vv = state.beta2 * *vv + (1.0 - state.beta2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv -= state.lr * m_hat / (fmath::sqrt(v_hat) + state.eps);
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(
            "learning rate must be positive and finite".into(),
        ))
    }
}

fn zeros(shapes: &[usize]) -> Vec<Vec<f64>> {
    shapes.iter().map(|&n| vec![0.0; n]).collect()
}
