//! Allocating stage: the bilevel training loop.
//!
//! Each iteration on a train minibatch runs three sub-steps while the weight
//! net is still learning:
//!
//! 1. **Virtual update**: weights `w = G(features | Θ_t)` produce a one-step
//!    lookahead `ω̂ = ω_t - α ∇(1/B Σ w_i l_i)`.
//! 2. **Meta step**: the meta-set loss gradient `g = ∇_ω̂ L_meta` is pulled
//!    back through the virtual step by the chain rule: with per-sample
//!    gradient dots `s_i = <∇_ω l_i, g>` (restricted to classifier layers
//!    `>= SL`, the skip-layer trick), the Θ-gradient is that of
//!    `Σ_i (-α/B) s_i G_i`, and Adam updates Θ.
//! 3. **Real update**: weights are recomputed with the fresh `Θ_{t+1}` and
//!    the classifier takes its actual SGD step on the same batch.
//!
//! Once the classifier learning rate first decays (`freeze_at`), Θ is frozen
//! and only step 3 runs. The loop never reads noise flags or true labels; any
//! reporting that needs them happens in the [`AllocObserver`] callback, which
//! the caller owns.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::biasgen::TrainingView;
use crate::nn::{self, Batch, GradientBundle, Mlp};
use crate::optim::OptimizerState;
use crate::probe::NormalizedCurves;
use crate::rng::{seeded, Stream};
use crate::weightnet::{FeatureKind, FeatureRows, WeightNet};
use crate::{Error, Result};

/// Stepwise classifier learning-rate decay: `initial`, multiplied by `factor`
/// at each milestone epoch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LrSchedule {
    pub initial: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        let mut lr = self.initial;
        for &m in &self.milestones {
            if epoch >= m {
                lr *= self.factor;
            }
        }
        lr
    }

    pub fn first_milestone(&self) -> Option<usize> {
        self.milestones.iter().copied().min()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AllocConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Meta minibatch size; defaults to `min(batch_size, meta set size)`.
    pub meta_batch_size: Option<usize>,
    pub classifier_lr: LrSchedule,
    /// Adam learning rate β for the weight net.
    pub weight_net_lr: f64,
    /// `SL`: bottom classifier layers excluded from the meta gradient.
    pub skip_layers: usize,
    /// Epoch at which Θ freezes; defaults to the first decay milestone.
    pub freeze_at: Option<usize>,
    pub seed: u64,
}

impl Default for AllocConfig {
    fn default() -> Self {
        AllocConfig {
            epochs: 60,
            batch_size: 64,
            meta_batch_size: None,
            classifier_lr: LrSchedule {
                initial: 0.1,
                milestones: vec![30, 45],
                factor: 0.1,
            },
            weight_net_lr: 1e-3,
            skip_layers: 0,
            freeze_at: None,
            seed: 0,
        }
    }
}

impl AllocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        let rates_positive = self.weight_net_lr > 0.0 && self.classifier_lr.initial > 0.0;
        if !rates_positive {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if let (Some(freeze), Some(first)) = (self.freeze_at, self.classifier_lr.first_milestone())
        {
            if freeze > first {
                return Err(Error::Config(alloc::format!(
                    "freeze_at {freeze} must not exceed the first decay milestone {first}"
                )));
            }
        }
        Ok(())
    }

    /// Resolved freeze epoch: explicit, else the first milestone, else never.
    pub fn freeze_epoch(&self) -> usize {
        self.freeze_at
            .or_else(|| self.classifier_lr.first_milestone())
            .unwrap_or(self.epochs)
    }
}

/// Monotonic time source for Θ-step timing. The loop itself never needs one
/// to be real: [`NullClock`] reports zero everywhere.
pub trait Clock {
    fn now_nanos(&mut self) -> u64;
}

/// Clock that always reads zero; timing columns come out as zero.
pub struct NullClock;

impl Clock for NullClock {
    fn now_nanos(&mut self) -> u64 {
        0
    }
}

/// Per-class mean weights split by the (evaluation-only) noise flag.
/// Entries are NaN when a (class, flag) group is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeightStats {
    pub clean_mean: Vec<f64>,
    pub noisy_mean: Vec<f64>,
}

/// Values only the caller can supply at epoch end (they require the held-out
/// test set or the firewalled noise flags).
#[derive(Debug, Clone, Default)]
pub struct EpochExtras {
    pub test_accuracy: Option<f64>,
    pub group_weights: Option<GroupWeightStats>,
}

/// End-of-epoch callback; the one place evaluation metadata may flow in.
pub trait AllocObserver {
    fn epoch_end(&mut self, epoch: usize, classifier: &Mlp, weight_net: &WeightNet) -> EpochExtras;
}

/// Observer that records nothing.
pub struct NullObserver;

impl AllocObserver for NullObserver {
    fn epoch_end(&mut self, _: usize, _: &Mlp, _: &WeightNet) -> EpochExtras {
        EpochExtras::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean visit-time training loss.
    pub train_loss: f64,
    /// Mean cross-entropy over the full meta set at epoch end; None when the
    /// run has no meta set (plain CE training).
    pub meta_loss: Option<f64>,
    /// Cumulative Θ updates; stops increasing at the freeze epoch.
    pub theta_updates: u64,
    /// Θ-step wall time spent this epoch, from the caller's clock.
    pub theta_step_nanos: u64,
    /// Θ steps taken this epoch.
    pub theta_steps: u64,
    pub test_accuracy: Option<f64>,
    pub group_weights: Option<GroupWeightStats>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AllocHistory {
    pub epochs: Vec<EpochRecord>,
}

impl AllocHistory {
    pub fn total_theta_steps(&self) -> u64 {
        self.epochs.iter().map(|e| e.theta_steps).sum()
    }

    pub fn total_theta_nanos(&self) -> u64 {
        self.epochs.iter().map(|e| e.theta_step_nanos).sum()
    }

    /// Mean Θ-step wall time in nanoseconds, zero if no steps ran.
    pub fn mean_theta_step_nanos(&self) -> f64 {
        let steps = self.total_theta_steps();
        if steps == 0 {
            0.0
        } else {
            self.total_theta_nanos() as f64 / steps as f64
        }
    }
}

/// Everything the allocating stage produces.
#[derive(Debug, Clone)]
pub struct AllocOutcome {
    pub classifier: Mlp,
    pub weight_net: WeightNet,
    pub history: AllocHistory,
}

/// One-step lookahead `ω̂ = ω - α ∇(1/B Σ w_i l_i)`; `ω` itself is untouched.
pub fn virtual_update(classifier: &Mlp, batch: &Batch, weights: &[f64], alpha: f64) -> Result<Mlp> {
    let grad = nn::weighted_grad(classifier, batch, weights)?;
    Ok(apply_step(classifier, &grad, alpha))
}

fn apply_step(classifier: &Mlp, grad: &GradientBundle, alpha: f64) -> Mlp {
    let mut out = classifier.clone();
    for (p, g) in out.param_blocks_mut().iter_mut().zip(grad.blocks()) {
        for (pv, &gv) in p.iter_mut().zip(g) {
            *pv -= alpha * gv;
        }
    }
    out
}

/// Output of one meta-gradient evaluation.
#[derive(Debug, Clone)]
pub struct MetaGradient {
    /// Gradient blocks over Θ, aligned with [`WeightNet::block_shapes`].
    pub theta_grad: Vec<Vec<f64>>,
    /// The virtual classifier ω̂ the meta loss was evaluated at.
    pub virtual_classifier: Mlp,
    /// Weights `w_i = G(features_i | Θ_t)` used for the virtual step.
    pub weights: Vec<f64>,
    /// Per-sample gradient dots `s_i` (already restricted to layers >= SL).
    pub grad_dots: Vec<f64>,
}

/// Analytic meta gradient of `Θ ↦ L_meta(ω̂(Θ))` on one train/meta batch pair,
/// with the layer sum restricted to classifier layers `>= skip_layers`.
pub fn meta_gradient_theta(
    classifier: &Mlp,
    train_batch: &Batch,
    train_features: FeatureRows,
    meta_batch: &Batch,
    weight_net: &WeightNet,
    alpha: f64,
    skip_layers: usize,
) -> Result<MetaGradient> {
    let trace = nn::forward_trace(classifier, train_batch)?;
    meta_gradient_from_trace(
        classifier,
        train_batch,
        &trace,
        train_features,
        meta_batch,
        weight_net,
        alpha,
        skip_layers,
    )
}

#[allow(clippy::too_many_arguments)]
fn meta_gradient_from_trace(
    classifier: &Mlp,
    train_batch: &Batch,
    trace: &nn::ForwardTrace,
    train_features: FeatureRows,
    meta_batch: &Batch,
    weight_net: &WeightNet,
    alpha: f64,
    skip_layers: usize,
) -> Result<MetaGradient> {
    let b = train_batch.len();
    let weights = weight_net.forward(train_features, train_batch.labels)?;
    let train_grad = nn::backward_weighted(classifier, train_batch, trace, &weights)?;
    let virtual_classifier = apply_step(classifier, &train_grad, alpha);

    // Unweighted mean cross-entropy gradient on the meta batch at ω̂.
    let ones = vec![1.0; meta_batch.len()];
    let meta_grad = nn::weighted_grad(&virtual_classifier, meta_batch, &ones)?;

    let grad_dots =
        nn::grad_dots_from_trace(classifier, train_batch, trace, &meta_grad, skip_layers)?;
    let scale = -alpha / b as f64;
    let upstream: Vec<f64> = grad_dots.iter().map(|&s| scale * s).collect();
    if upstream.iter().any(|u| !u.is_finite()) {
        return Err(Error::Numeric {
            layer: None,
            what: "meta-gradient upstream coefficients".into(),
        });
    }
    let theta_grad = weight_net.param_grad(train_features, train_batch.labels, &upstream)?;
    Ok(MetaGradient {
        theta_grad,
        virtual_classifier,
        weights,
        grad_dots,
    })
}

fn check_curve_alignment(train: &TrainingView, curves: &NormalizedCurves) -> Result<()> {
    if curves.sample_ids() != train.sample_ids.as_slice() {
        return Err(Error::Config(
            "normalized curves are not row-aligned with the training set".into(),
        ));
    }
    if curves.num_classes() != train.num_classes {
        return Err(Error::Config(
            "normalized curves disagree with the training set on class count".into(),
        ));
    }
    Ok(())
}

/// Cycling meta-batch sampler: uniform order, reshuffled each time the meta
/// set is exhausted.
struct MetaSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl MetaSampler {
    fn new(len: usize, seed: u64) -> Self {
        MetaSampler {
            order: (0..len).collect(),
            cursor: len, // force a shuffle on first use
            rng: seeded(seed, Stream::MetaShuffle),
        }
    }

    fn next_batch(&mut self, size: usize) -> &[usize] {
        if self.cursor + size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = &self.order[self.cursor..self.cursor + size];
        self.cursor += size;
        out
    }
}

/// Runs the full allocating stage.
///
/// `curves` must be supplied (and row-aligned with `train`) exactly when the
/// weight net consumes curve features; misalignment is a hard error before
/// any training happens.
#[allow(clippy::too_many_arguments)]
pub fn allocate_train(
    train: &TrainingView,
    meta: &TrainingView,
    curves: Option<&NormalizedCurves>,
    classifier: Mlp,
    weight_net: WeightNet,
    config: &AllocConfig,
    clock: &mut dyn Clock,
    observer: &mut dyn AllocObserver,
) -> Result<AllocOutcome> {
    config.validate()?;
    if train.is_empty() || meta.is_empty() {
        return Err(Error::Config("train and meta sets must be nonempty".into()));
    }
    if config.skip_layers > classifier.depth() {
        return Err(Error::Domain(alloc::format!(
            "skip_layers {} out of range for a {}-layer classifier",
            config.skip_layers,
            classifier.depth()
        )));
    }
    match weight_net.feature_kind() {
        FeatureKind::Curves => {
            let curves = curves.ok_or_else(|| {
                Error::Config("curve-conditioned weight net needs normalized curves".into())
            })?;
            check_curve_alignment(train, curves)?;
        }
        FeatureKind::TransientLoss | FeatureKind::None => {}
    }
    run_loop(
        train,
        Some(meta),
        curves,
        classifier,
        weight_net,
        config,
        clock,
        observer,
    )
}

/// Plain cross-entropy training with the identical batching discipline as
/// [`allocate_train`]: the reference baseline a constant-weight allocating
/// run must reproduce bitwise.
pub fn train_ce(
    train: &TrainingView,
    classifier: Mlp,
    config: &AllocConfig,
    observer: &mut dyn AllocObserver,
) -> Result<(Mlp, AllocHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("train set must be nonempty".into()));
    }
    let outcome = run_loop(
        train,
        None,
        None,
        classifier,
        WeightNet::Constant(1.0),
        config,
        &mut NullClock,
        observer,
    )?;
    Ok((outcome.classifier, outcome.history))
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    train: &TrainingView,
    meta: Option<&TrainingView>,
    curves: Option<&NormalizedCurves>,
    mut classifier: Mlp,
    mut weight_net: WeightNet,
    config: &AllocConfig,
    clock: &mut dyn Clock,
    observer: &mut dyn AllocObserver,
) -> Result<AllocOutcome> {
    let n = train.len();
    let k = train.num_classes;
    let freeze_at = config.freeze_epoch();
    let learnable = weight_net.is_learnable() && meta.is_some();

    let mut sgd = OptimizerState::sgd(config.classifier_lr.at(0))?;
    let mut adam = if learnable {
        Some(OptimizerState::adam(
            config.weight_net_lr,
            &weight_net.block_shapes(),
        )?)
    } else {
        None
    };

    let meta_batch_size = meta.map(|m| {
        let requested = config.meta_batch_size.unwrap_or(config.batch_size);
        requested.clamp(1, m.len())
    });
    let mut meta_sampler = meta.map(|m| MetaSampler::new(m.len(), config.seed));

    let mut shuffle_rng = seeded(config.seed, Stream::TrainShuffle);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = AllocHistory::default();
    let mut theta_updates_total = 0u64;

    let mut inputs_buf: Vec<f64> = Vec::new();
    let mut labels_buf: Vec<usize> = Vec::new();
    let mut meta_inputs: Vec<f64> = Vec::new();
    let mut meta_labels: Vec<usize> = Vec::new();
    let mut feature_buf: Vec<f64> = Vec::new();

    for epoch in 0..config.epochs {
        sgd.set_lr(config.classifier_lr.at(epoch));
        let alpha = sgd.lr();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut theta_nanos = 0u64;
        let mut theta_steps = 0u64;

        for rows in order.chunks(config.batch_size) {
            train.gather(rows, &mut inputs_buf, &mut labels_buf);
            let batch = Batch::new(&inputs_buf, &labels_buf, train.input_dim)?;
            let trace = nn::forward_trace(&classifier, &batch)?;
            let visit_losses = nn::per_sample_loss(trace.logits(), &labels_buf, k)?;
            loss_sum += visit_losses.iter().sum::<f64>();

            let features =
                gather_features(&weight_net, curves, rows, &visit_losses, &mut feature_buf);

            if learnable && epoch < freeze_at {
                let t0 = clock.now_nanos();
                let meta_view = meta.expect("learnable implies a meta set");
                let sampler = meta_sampler.as_mut().expect("sampler exists with meta set");
                let meta_rows = sampler.next_batch(meta_batch_size.unwrap()).to_vec();
                meta_view.gather(&meta_rows, &mut meta_inputs, &mut meta_labels);
                let meta_batch = Batch::new(&meta_inputs, &meta_labels, meta_view.input_dim)?;
                let meta_grad = meta_gradient_from_trace(
                    &classifier,
                    &batch,
                    &trace,
                    features,
                    &meta_batch,
                    &weight_net,
                    alpha,
                    config.skip_layers,
                )?;
                let grads: Vec<&[f64]> =
                    meta_grad.theta_grad.iter().map(|b| b.as_slice()).collect();
                adam.as_mut()
                    .expect("adam exists for learnable nets")
                    .step(&mut weight_net.param_blocks_mut(), &grads)?;
                theta_nanos += clock.now_nanos().saturating_sub(t0);
                theta_steps += 1;
                theta_updates_total += 1;
            }

            // Real step with the refreshed Θ: recompute weights, reuse
            // the ω_t forward trace, same batch.
            let weights = weight_net.forward(features, &labels_buf)?;
            let real_grad = nn::backward_weighted(&classifier, &batch, &trace, &weights)?;
            sgd.step(&mut classifier.param_blocks_mut(), &real_grad.blocks())?;
        }

        let meta_loss = match meta {
            Some(meta_view) => Some(full_set_loss(&classifier, meta_view)?),
            None => None,
        };
        let extras = observer.epoch_end(epoch, &classifier, &weight_net);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            meta_loss,
            theta_updates: theta_updates_total,
            theta_step_nanos: theta_nanos,
            theta_steps,
            test_accuracy: extras.test_accuracy,
            group_weights: extras.group_weights,
        });
    }

    Ok(AllocOutcome {
        classifier,
        weight_net,
        history,
    })
}

/// Gathers the weight net's per-batch input features.
fn gather_features<'a>(
    weight_net: &WeightNet,
    curves: Option<&NormalizedCurves>,
    rows: &[usize],
    visit_losses: &[f64],
    buf: &'a mut Vec<f64>,
) -> FeatureRows<'a> {
    match weight_net.feature_kind() {
        FeatureKind::None => FeatureRows::empty(),
        FeatureKind::Curves => {
            let curves = curves.expect("alignment checked before training");
            let c = curves.curve_len();
            buf.clear();
            for &r in rows {
                buf.extend_from_slice(curves.row(r));
            }
            FeatureRows {
                rows: buf,
                width: c,
            }
        }
        FeatureKind::TransientLoss => {
            buf.clear();
            buf.extend_from_slice(visit_losses);
            FeatureRows {
                rows: buf,
                width: 1,
            }
        }
    }
}

/// Mean cross-entropy of a whole view at fixed parameters.
pub fn full_set_loss(classifier: &Mlp, view: &TrainingView) -> Result<f64> {
    let batch = Batch::new(&view.inputs, &view.labels, view.input_dim)?;
    let logits = nn::forward_logits(classifier, &batch)?;
    let losses = nn::per_sample_loss(&logits, &view.labels, view.num_classes)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}
