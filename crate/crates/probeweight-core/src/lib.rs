//! Probe-and-allocate training engine.
//!
//! Training data collected in the wild carries two biases at once: corrupted
//! labels and long-tailed class distributions. This crate implements a
//! two-stage strategy for training dense classifiers on such data:
//!
//! 1. **Probing** ([`probe`]): train a throwaway classifier on the full biased
//!    dataset under a cyclical learning rate and record every sample's
//!    per-epoch training loss. The resulting loss curves separate noisy
//!    samples (flat, persistently high) from clean hard samples (sharp rise,
//!    then fall) in a way a single transient loss value cannot.
//! 2. **Allocating** ([`meta`]): train the final classifier while a small
//!    curve-conditioned network ([`curvenet`]) maps each sample's normalized
//!    loss curve plus an embedded class label to a weight in (0,1). The weight
//!    net is meta-learned against a small unbiased meta set by
//!    differentiating through a one-step virtual SGD update. Skip-layer meta
//!    optimization (SLMO) restricts that second-order computation to the top
//!    classifier layers to cut its cost.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the default
//! `std` feature for freestanding use. All operations are deterministic:
//! identical seeds produce bitwise-identical results. IO, file formats, and
//! the experiment harness live in the companion `probeweight-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod biasgen;
pub mod check;
pub mod curvenet;
mod error;
mod fmath;
pub mod meta;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod probe;
pub mod rng;
pub mod weightnet;

pub use error::{Error, Result};
