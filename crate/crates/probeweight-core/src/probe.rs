//! Probing stage: record per-sample loss curves under a cyclical learning
//! rate, then truncate and class-normalize them.
//!
//! A sample's loss is recorded at visit time: the cross-entropy computed in
//! the forward pass of the minibatch containing it, before that minibatch's
//! update. One pass per epoch is all the probing costs. An alternative
//! end-of-epoch evaluation pass exists for sensitivity studies.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::biasgen::TrainingView;
use crate::nn::{self, Batch, Mlp};
use crate::optim::OptimizerState;
use crate::rng::{seeded, Stream};
use crate::{Error, Result};

/// Triangular-restart learning-rate schedule: within each cycle of
/// `cycle_len` epochs the rate decays linearly from `max_lr` down to
/// `base_lr`, then restarts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CyclicalSchedule {
    pub base_lr: f64,
    pub max_lr: f64,
    pub cycle_len: usize,
}

impl Default for CyclicalSchedule {
    fn default() -> Self {
        CyclicalSchedule {
            base_lr: 0.001,
            max_lr: 0.1,
            cycle_len: 10,
        }
    }
}

impl CyclicalSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.cycle_len < 2 {
            return Err(Error::Config("cycle length must be at least 2".into()));
        }
        let ordered = self.base_lr > 0.0 && self.base_lr < self.max_lr;
        if !ordered {
            return Err(Error::Config("need 0 < base_lr < max_lr".into()));
        }
        Ok(())
    }
}

/// Learning rate at `epoch` under the cyclical schedule.
pub fn cyclical_lr_at(schedule: &CyclicalSchedule, epoch: usize) -> f64 {
    let pos = (epoch % schedule.cycle_len) as f64;
    let span = (schedule.cycle_len - 1) as f64;
    schedule.max_lr - (schedule.max_lr - schedule.base_lr) * pos / span
}

/// When during an epoch each sample's loss is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RecordMode {
    /// At visit time, pre-update, inside the training pass (the default).
    AtVisit,
    /// A separate full-dataset evaluation at the end of each epoch.
    EvalPass,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeConfig {
    pub epochs: usize,
    /// `S`: leading epochs dropped before normalization.
    pub prefix_drop: usize,
    pub batch_size: usize,
    pub schedule: CyclicalSchedule,
    pub seed: u64,
    pub std_normalize: bool,
    pub record_mode: RecordMode,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 60,
            prefix_drop: 5,
            batch_size: 64,
            schedule: CyclicalSchedule::default(),
            seed: 0,
            std_normalize: false,
            record_mode: RecordMode::AtVisit,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.prefix_drop >= self.epochs {
            return Err(Error::Config(alloc::format!(
                "prefix_drop {} must be smaller than the epoch count {}",
                self.prefix_drop,
                self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// The `N x T` grid of recorded per-sample training losses, rows aligned
/// with the probed dataset's order.
///
/// Losses are stored as `f32`, the precision of the on-disk curve format.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurveMatrix {
    losses: Vec<f32>,
    sample_ids: Vec<u64>,
    observed_labels: Vec<u16>,
    epochs: usize,
}

impl LossCurveMatrix {
    pub fn new(
        losses: Vec<f32>,
        sample_ids: Vec<u64>,
        observed_labels: Vec<u16>,
        epochs: usize,
    ) -> Result<Self> {
        let n = sample_ids.len();
        if observed_labels.len() != n || losses.len() != n * epochs {
            return Err(Error::Config(
                "curve matrix dimensions are inconsistent".into(),
            ));
        }
        if losses.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numeric {
                layer: None,
                what: "loss curve entry".into(),
            });
        }
        Ok(LossCurveMatrix {
            losses,
            sample_ids,
            observed_labels,
            epochs,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn losses(&self) -> &[f32] {
        &self.losses
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    pub fn observed_labels(&self) -> &[u16] {
        &self.observed_labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.losses[i * self.epochs..(i + 1) * self.epochs]
    }

    /// Mean loss per sample over epochs `prefix_drop..`.
    pub fn mean_loss_per_sample(&self, prefix_drop: usize) -> Result<Vec<f64>> {
        if prefix_drop >= self.epochs {
            return Err(Error::Config(alloc::format!(
                "prefix_drop {} leaves no epochs of {}",
                prefix_drop,
                self.epochs
            )));
        }
        let span = (self.epochs - prefix_drop) as f64;
        Ok((0..self.num_samples())
            .map(|i| {
                self.row(i)[prefix_drop..]
                    .iter()
                    .map(|&v| v as f64)
                    .sum::<f64>()
                    / span
            })
            .collect())
    }
}

/// Truncated, class-mean-subtracted curve features fed to the weight net.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCurves {
    /// `N x C` feature matrix, `C = T - S`.
    features: Vec<f64>,
    sample_ids: Vec<u64>,
    labels: Vec<usize>,
    /// Per-(class, epoch) means that were subtracted, kept for audit.
    class_means: Vec<f64>,
    /// Per-(class, epoch) sample stds, kept when std normalization is on.
    class_stds: Option<Vec<f64>>,
    curve_len: usize,
    num_classes: usize,
}

impl NormalizedCurves {
    pub fn num_samples(&self) -> usize {
        self.sample_ids.len()
    }

    /// Feature width `C`.
    pub fn curve_len(&self) -> usize {
        self.curve_len
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.curve_len..(i + 1) * self.curve_len]
    }

    pub fn class_means(&self) -> &[f64] {
        &self.class_means
    }

    pub fn class_stds(&self) -> Option<&[f64]> {
        self.class_stds.as_deref()
    }
}

/// Hook into the probe loop, invoked before each minibatch update with the
/// pre-update parameters and the losses about to be recorded.
pub trait ProbeObserver {
    fn before_update(&mut self, epoch: usize, rows: &[usize], params: &Mlp, losses: &[f64]);
}

struct NoObserver;

impl ProbeObserver for NoObserver {
    fn before_update(&mut self, _: usize, _: &[usize], _: &Mlp, _: &[f64]) {}
}

/// Trains `classifier` on the full biased view under the cyclical schedule
/// and returns every sample's per-epoch loss curve.
///
/// Each epoch visits every sample exactly once in a seeded shuffle order.
pub fn probe_train(
    view: &TrainingView,
    classifier: Mlp,
    config: &ProbeConfig,
) -> Result<LossCurveMatrix> {
    probe_train_observed(view, classifier, config, &mut NoObserver)
}

/// [`probe_train`] with an instrumentation hook.
pub fn probe_train_observed(
    view: &TrainingView,
    mut classifier: Mlp,
    config: &ProbeConfig,
    observer: &mut dyn ProbeObserver,
) -> Result<LossCurveMatrix> {
    config.validate()?;
    if view.is_empty() {
        return Err(Error::Config("cannot probe an empty dataset".into()));
    }
    if classifier.input_dim() != view.input_dim {
        return Err(Error::Shape {
            layer: 0,
            expected: classifier.input_dim(),
            got: view.input_dim,
        });
    }
    let n = view.len();
    let k = view.num_classes;
    let mut losses = vec![0.0f32; n * config.epochs];
    let mut shuffle_rng = seeded(config.seed, Stream::TrainShuffle);
    let mut order: Vec<usize> = (0..n).collect();
    let mut optimizer = OptimizerState::sgd(config.schedule.max_lr)?;
    let mut inputs_buf: Vec<f64> = Vec::new();
    let mut labels_buf: Vec<usize> = Vec::new();

    for epoch in 0..config.epochs {
        optimizer.set_lr(cyclical_lr_at(&config.schedule, epoch));
        order.shuffle(&mut shuffle_rng);
        for rows in order.chunks(config.batch_size) {
            view.gather(rows, &mut inputs_buf, &mut labels_buf);
            let batch = Batch::new(&inputs_buf, &labels_buf, view.input_dim)?;
            let trace = nn::forward_trace(&classifier, &batch)?;
            let batch_losses = nn::per_sample_loss(trace.logits(), &labels_buf, k)
                .map_err(|e| numeric_context(e, epoch, rows))?;
            if config.record_mode == RecordMode::AtVisit {
                observer.before_update(epoch, rows, &classifier, &batch_losses);
                record(&mut losses, config.epochs, epoch, rows, &batch_losses)?;
            }
            let weights = vec![1.0; rows.len()];
            let grad = nn::backward_weighted(&classifier, &batch, &trace, &weights)?;
            let mut blocks = classifier.param_blocks_mut();
            optimizer.step(&mut blocks, &grad.blocks())?;
        }
        if config.record_mode == RecordMode::EvalPass {
            let rows: Vec<usize> = (0..n).collect();
            view.gather(&rows, &mut inputs_buf, &mut labels_buf);
            let batch = Batch::new(&inputs_buf, &labels_buf, view.input_dim)?;
            let logits = nn::forward_logits(&classifier, &batch)?;
            let all_losses = nn::per_sample_loss(&logits, &labels_buf, k)?;
            observer.before_update(epoch, &rows, &classifier, &all_losses);
            record(&mut losses, config.epochs, epoch, &rows, &all_losses)?;
        }
    }

    let labels_u16: Vec<u16> = view.labels.iter().map(|&l| l as u16).collect();
    LossCurveMatrix::new(losses, view.sample_ids.clone(), labels_u16, config.epochs)
}

fn record(
    losses: &mut [f32],
    epochs: usize,
    epoch: usize,
    rows: &[usize],
    batch_losses: &[f64],
) -> Result<()> {
    for (&row, &loss) in rows.iter().zip(batch_losses) {
        let v = loss as f32;
        if !v.is_finite() {
            return Err(Error::Numeric {
                layer: None,
                what: alloc::format!("loss of sample row {row} at epoch {epoch}"),
            });
        }
        losses[row * epochs + epoch] = v;
    }
    Ok(())
}

fn numeric_context(err: Error, epoch: usize, rows: &[usize]) -> Error {
    match err {
        Error::Numeric { layer, what } => Error::Numeric {
            layer,
            what: alloc::format!("{what} (epoch {epoch}, batch rows {rows:?})"),
        },
        other => other,
    }
}

/// Drops the first `prefix_drop` epochs and subtracts the per-(class, epoch)
/// mean; optionally divides by the per-(class, epoch) sample std
/// (floored at 1e-8).
pub fn normalize_curves(
    curves: &LossCurveMatrix,
    num_classes: usize,
    prefix_drop: usize,
    std_normalize: bool,
) -> Result<NormalizedCurves> {
    if prefix_drop >= curves.epochs() {
        return Err(Error::Config(alloc::format!(
            "prefix_drop {} leaves no epochs of {}",
            prefix_drop,
            curves.epochs()
        )));
    }
    let n = curves.num_samples();
    let c = curves.epochs() - prefix_drop;
    let labels: Vec<usize> = curves
        .observed_labels()
        .iter()
        .map(|&l| l as usize)
        .collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Domain(alloc::format!(
            "curve label {bad} out of range for {num_classes} classes"
        )));
    }
    let mut class_sizes = vec![0usize; num_classes];
    for &l in &labels {
        class_sizes[l] += 1;
    }
    if let Some(empty) = class_sizes.iter().position(|&s| s == 0) {
        return Err(Error::Domain(alloc::format!(
            "class {empty} has no samples in the probed curves"
        )));
    }

    // Truncate into f64 features.
    let mut features = vec![0.0f64; n * c];
    for i in 0..n {
        for (j, &v) in curves.row(i)[prefix_drop..].iter().enumerate() {
            features[i * c + j] = v as f64;
        }
    }

    let mut class_means = vec![0.0f64; num_classes * c];
    for i in 0..n {
        let k = labels[i];
        for j in 0..c {
            class_means[k * c + j] += features[i * c + j];
        }
    }
    for k in 0..num_classes {
        for j in 0..c {
            class_means[k * c + j] /= class_sizes[k] as f64;
        }
    }
    for i in 0..n {
        let k = labels[i];
        for j in 0..c {
            features[i * c + j] -= class_means[k * c + j];
        }
    }

    let class_stds = if std_normalize {
        let mut stds = vec![0.0f64; num_classes * c];
        for i in 0..n {
            let k = labels[i];
            for j in 0..c {
                let v = features[i * c + j];
                stds[k * c + j] += v * v;
            }
        }
        for k in 0..num_classes {
            let denom = (class_sizes[k].max(2) - 1) as f64;
            for j in 0..c {
                let var = stds[k * c + j] / denom;
                stds[k * c + j] = crate::fmath::sqrt(var).max(1e-8);
            }
        }
        for i in 0..n {
            let k = labels[i];
            for j in 0..c {
                features[i * c + j] /= stds[k * c + j];
            }
        }
        Some(stds)
    } else {
        None
    };

    Ok(NormalizedCurves {
        features,
        sample_ids: curves.sample_ids().to_vec(),
        labels,
        class_means,
        class_stds,
        curve_len: c,
        num_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biasgen::{apply_label_noise, generate_blobs, BlobGeometry, NoiseMode};
    use crate::rng::{seeded, Stream};

    fn small_config(epochs: usize) -> ProbeConfig {
        ProbeConfig {
            epochs,
            prefix_drop: 2,
            batch_size: 16,
            schedule: CyclicalSchedule {
                base_lr: 0.01,
                max_lr: 0.1,
                cycle_len: 5,
            },
            seed: 3,
            std_normalize: false,
            record_mode: RecordMode::AtVisit,
        }
    }

    #[test]
    fn schedule_endpoints_and_periodicity() {
        let s = CyclicalSchedule {
            base_lr: 0.001,
            max_lr: 0.1,
            cycle_len: 10,
        };
        assert_eq!(cyclical_lr_at(&s, 0), 0.1);
        assert!((cyclical_lr_at(&s, 9) - 0.001).abs() < 1e-15);
        for epoch in 0..40 {
            assert_eq!(cyclical_lr_at(&s, epoch), cyclical_lr_at(&s, epoch + 10));
        }
    }

    #[test]
    fn probe_output_is_aligned_and_deterministic() {
        let data = generate_blobs(3, 20, 2, &BlobGeometry::default(), 5).unwrap();
        let view = data.training_view();
        let config = small_config(6);
        let mut rng = seeded(1, Stream::ClassifierInit);
        let net = Mlp::init(&[2, 8, 3], &mut rng).unwrap();
        let a = probe_train(&view, net.clone(), &config).unwrap();
        assert_eq!(a.num_samples(), 60);
        assert_eq!(a.epochs(), 6);
        assert_eq!(a.sample_ids(), view.sample_ids.as_slice());
        let b = probe_train(&view, net, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probe_ignores_hidden_labels_and_noise_flags() {
        // Two datasets identical in everything training may see, differing
        // only in evaluation metadata, must produce identical curves.
        let clean = generate_blobs(3, 20, 2, &BlobGeometry::default(), 5).unwrap();
        let relabeled = apply_label_noise(&clean, 1.0, NoiseMode::Uniform, 9).unwrap();
        let mut forged = relabeled.samples().to_vec();
        for s in &mut forged {
            s.true_label = s.observed_label;
            s.is_noisy = false;
        }
        let forged = crate::biasgen::Dataset::from_samples(forged, 3).unwrap();

        let config = small_config(4);
        let mut rng = seeded(2, Stream::ClassifierInit);
        let net = Mlp::init(&[2, 6, 3], &mut rng).unwrap();
        let a = probe_train(&relabeled.training_view(), net.clone(), &config).unwrap();
        let b = probe_train(&forged.training_view(), net, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recorded_losses_match_pre_update_parameters() {
        struct Spot {
            epoch: usize,
            rows: Vec<usize>,
            params: Option<Mlp>,
            losses: Vec<f64>,
        }
        impl ProbeObserver for Spot {
            fn before_update(
                &mut self,
                epoch: usize,
                rows: &[usize],
                params: &Mlp,
                losses: &[f64],
            ) {
                if epoch == self.epoch && self.params.is_none() {
                    self.rows = rows.to_vec();
                    self.params = Some(params.clone());
                    self.losses = losses.to_vec();
                }
            }
        }
        let data = generate_blobs(2, 12, 2, &BlobGeometry::default(), 8).unwrap();
        let view = data.training_view();
        let config = small_config(5);
        let mut rng = seeded(4, Stream::ClassifierInit);
        let net = Mlp::init(&[2, 4, 2], &mut rng).unwrap();
        let mut spot = Spot {
            epoch: 3,
            rows: Vec::new(),
            params: None,
            losses: Vec::new(),
        };
        let curves = probe_train_observed(&view, net, &config, &mut spot).unwrap();

        // Recompute the spotted minibatch's losses at the captured params.
        let params = spot.params.expect("observer fired");
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        view.gather(&spot.rows, &mut inputs, &mut labels);
        let batch = Batch::new(&inputs, &labels, 2).unwrap();
        let logits = nn::forward_logits(&params, &batch).unwrap();
        let expect = nn::per_sample_loss(&logits, &labels, 2).unwrap();
        for (ri, &row) in spot.rows.iter().enumerate() {
            assert_eq!(curves.row(row)[3], expect[ri] as f32);
            assert_eq!(spot.losses[ri], expect[ri]);
        }
    }

    #[test]
    fn eval_pass_records_every_sample_at_the_same_parameters() {
        struct Last {
            params: Option<Mlp>,
        }
        impl ProbeObserver for Last {
            fn before_update(&mut self, _: usize, _: &[usize], params: &Mlp, _: &[f64]) {
                self.params = Some(params.clone());
            }
        }
        let data = generate_blobs(2, 15, 2, &BlobGeometry::default(), 14).unwrap();
        let view = data.training_view();
        let config = ProbeConfig {
            record_mode: RecordMode::EvalPass,
            ..small_config(4)
        };
        let mut rng = seeded(5, Stream::ClassifierInit);
        let net = Mlp::init(&[2, 4, 2], &mut rng).unwrap();
        let mut last = Last { params: None };
        let curves = probe_train_observed(&view, net, &config, &mut last).unwrap();

        // The final column is the full-dataset evaluation at the end-of-epoch
        // parameters the observer saw last.
        let params = last.params.unwrap();
        let batch = Batch::new(&view.inputs, &view.labels, 2).unwrap();
        let logits = nn::forward_logits(&params, &batch).unwrap();
        let expect = nn::per_sample_loss(&logits, &view.labels, 2).unwrap();
        for (i, &e) in expect.iter().enumerate() {
            assert_eq!(curves.row(i)[3], e as f32);
        }
    }

    #[test]
    fn noisy_samples_keep_higher_final_cycle_loss() {
        // Well-separated two-class blobs with 20% uniform noise: over the
        // final cycle, noisy samples must average a higher loss than clean.
        let geometry = BlobGeometry {
            separation: 4.0,
            std_dev: 0.6,
            centers: None,
        };
        let clean = generate_blobs(2, 150, 2, &geometry, 17).unwrap();
        let biased = apply_label_noise(&clean, 0.2, NoiseMode::Uniform, 23).unwrap();
        let view = biased.training_view();
        let config = ProbeConfig {
            epochs: 20,
            batch_size: 32,
            seed: 6,
            ..ProbeConfig::default()
        };
        let mut rng = seeded(7, Stream::ClassifierInit);
        let net = Mlp::init(&[2, 16, 2], &mut rng).unwrap();
        let curves = probe_train(&view, net, &config).unwrap();

        let final_cycle = config.epochs - config.schedule.cycle_len;
        let mut noisy_mean = 0.0;
        let mut noisy_n = 0;
        let mut clean_mean = 0.0;
        let mut clean_n = 0;
        for (i, s) in biased.samples().iter().enumerate() {
            let m: f64 = curves.row(i)[final_cycle..]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>()
                / config.schedule.cycle_len as f64;
            if s.is_noisy {
                noisy_mean += m;
                noisy_n += 1;
            } else {
                clean_mean += m;
                clean_n += 1;
            }
        }
        noisy_mean /= noisy_n as f64;
        clean_mean /= clean_n as f64;
        assert!(
            noisy_mean > clean_mean,
            "noisy {noisy_mean} should exceed clean {clean_mean}"
        );
    }

    #[test]
    fn normalization_subtracts_class_means() {
        // Three samples of one class with losses [1, 2, 3] at each epoch.
        let losses = vec![1.0f32, 1.0, 2.0, 2.0, 3.0, 3.0];
        let curves = LossCurveMatrix::new(losses, vec![0, 1, 2], vec![0, 0, 0], 2).unwrap();
        let normalized = normalize_curves(&curves, 1, 0, false).unwrap();
        assert_eq!(normalized.curve_len(), 2);
        assert_eq!(normalized.row(0), &[-1.0, -1.0]);
        assert_eq!(normalized.row(1), &[0.0, 0.0]);
        assert_eq!(normalized.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn equal_losses_normalize_to_zero_and_widths_slice() {
        let n = 4;
        let t = 105;
        let losses = vec![0.25f32; n * t];
        let curves =
            LossCurveMatrix::new(losses, (0..n as u64).collect(), vec![0, 1, 0, 1], t).unwrap();
        let normalized = normalize_curves(&curves, 2, 5, false).unwrap();
        assert_eq!(normalized.curve_len(), 100);
        assert!(normalized.features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_zero_mean_invariant_and_std_flag() {
        let data = generate_blobs(3, 25, 2, &BlobGeometry::default(), 30).unwrap();
        let view = data.training_view();
        let config = small_config(8);
        let mut rng = seeded(10, Stream::ClassifierInit);
        let net = Mlp::init(&[2, 8, 3], &mut rng).unwrap();
        let curves = probe_train(&view, net, &config).unwrap();

        for std_normalize in [false, true] {
            let nc = normalize_curves(&curves, 3, 2, std_normalize).unwrap();
            let c = nc.curve_len();
            for class in 0..3 {
                let rows: Vec<usize> = (0..nc.num_samples())
                    .filter(|&i| nc.labels()[i] == class)
                    .collect();
                for j in 0..c {
                    let mean: f64 =
                        rows.iter().map(|&i| nc.row(i)[j]).sum::<f64>() / rows.len() as f64;
                    assert!(mean.abs() < 1e-6, "class {class} epoch {j}: mean {mean}");
                    if std_normalize {
                        let var: f64 = rows
                            .iter()
                            .map(|&i| nc.row(i)[j] * nc.row(i)[j])
                            .sum::<f64>()
                            / (rows.len() - 1) as f64;
                        assert!((var.sqrt() - 1.0).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn missing_class_is_a_domain_error() {
        let losses = vec![1.0f32; 4];
        let curves = LossCurveMatrix::new(losses, vec![0, 1], vec![0, 0], 2).unwrap();
        match normalize_curves(&curves, 2, 0, false) {
            Err(Error::Domain(_)) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
    }
}
