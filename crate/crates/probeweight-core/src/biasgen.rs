//! Synthetic datasets and bias injection.
//!
//! Clean balanced Gaussian-blob datasets, plus the two bias types under
//! study: exponential class imbalance (class `i` keeps `round(n_0 * mu^i)`
//! samples with `mu = IF^(-1/(K-1))`) and label noise (uniform, or flip2 where
//! each true class corrupts into a fixed pair of other classes). Bias order is
//! imbalance first, then noise, so every class carries a noisy shadow
//! proportional to its size.
//!
//! `true_label` and `is_noisy` are evaluation-only metadata. Training code
//! never sees them: it consumes a [`TrainingView`], which carries only
//! features, observed labels, and sample ids.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::fmath;
use crate::probe::LossCurveMatrix;
use crate::rng::{seeded, Stream};
use crate::{Error, Result};

/// One sample. `is_noisy` holds exactly when the observed label differs from
/// the hidden true one.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub observed_label: usize,
    pub true_label: usize,
    pub is_noisy: bool,
    pub sample_id: u64,
}

/// A labeled dataset with per-class counts kept consistent with the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    num_classes: usize,
    class_counts: Vec<usize>,
}

/// Label-noise flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseMode {
    Uniform,
    Flip2,
}

/// Bias recipe applied to a clean dataset, recorded alongside generated data.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasConfig {
    pub imbalance_factor: f64,
    pub noise_rate: f64,
    pub noise_mode: NoiseMode,
    pub seed: u64,
}

impl BiasConfig {
    /// Per-class decay `mu = IF^(-1/(K-1))`, computed rather than stored so it
    /// can never drift from the imbalance factor.
    pub fn decay(&self, num_classes: usize) -> f64 {
        decay(self.imbalance_factor, num_classes)
    }
}

fn decay(imbalance_factor: f64, num_classes: usize) -> f64 {
    fmath::powf(imbalance_factor, -1.0 / (num_classes as f64 - 1.0))
}

/// Gaussian cluster layout for [`generate_blobs`].
///
/// By default class centers sit equally spaced on a circle of radius
/// `separation` in the first two feature dimensions; `std_dev` controls the
/// cluster spread and therefore the class-overlap ("hard sample") rate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlobGeometry {
    pub separation: f64,
    pub std_dev: f64,
    /// Explicit `K x d` centers; overrides the circle layout when set.
    pub centers: Option<Vec<Vec<f64>>>,
}

impl Default for BlobGeometry {
    fn default() -> Self {
        BlobGeometry {
            separation: 2.0,
            std_dev: 1.0,
            centers: None,
        }
    }
}

impl BlobGeometry {
    fn resolve(&self, num_classes: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
        let centers = match &self.centers {
            Some(centers) => {
                if centers.len() != num_classes || centers.iter().any(|c| c.len() != dim) {
                    return Err(Error::Config(alloc::format!(
                        "centers must be {num_classes} x {dim}"
                    )));
                }
                centers.clone()
            }
            None => {
                let mut centers = Vec::with_capacity(num_classes);
                for c in 0..num_classes {
                    let angle = core::f64::consts::TAU * c as f64 / num_classes as f64;
                    let mut center = vec![0.0; dim];
                    center[0] = self.separation * cos(angle);
                    center[1] = self.separation * sin(angle);
                    centers.push(center);
                }
                centers
            }
        };
        if self.std_dev < 0.0 {
            return Err(Error::Config("std_dev must be nonnegative".into()));
        }
        if self.std_dev == 0.0 {
            for a in 0..centers.len() {
                for b in a + 1..centers.len() {
                    if centers[a] == centers[b] {
                        return Err(Error::Config(alloc::format!(
                            "degenerate geometry: centers {a} and {b} coincide with zero variance"
                        )));
                    }
                }
            }
        }
        Ok(centers)
    }
}

#[cfg(feature = "std")]
fn cos(x: f64) -> f64 {
    x.cos()
}
#[cfg(feature = "std")]
fn sin(x: f64) -> f64 {
    x.sin()
}
#[cfg(not(feature = "std"))]
fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[cfg(not(feature = "std"))]
fn sin(x: f64) -> f64 {
    libm::sin(x)
}

impl Dataset {
    pub fn from_samples(samples: Vec<Sample>, num_classes: usize) -> Result<Self> {
        let mut class_counts = vec![0usize; num_classes];
        let mut seen = alloc::collections::BTreeSet::new();
        for s in &samples {
            if s.observed_label >= num_classes || s.true_label >= num_classes {
                return Err(Error::Domain(alloc::format!(
                    "sample {} has a label outside 0..{num_classes}",
                    s.sample_id
                )));
            }
            if s.is_noisy != (s.observed_label != s.true_label) {
                return Err(Error::Config(alloc::format!(
                    "sample {} noise flag inconsistent with its labels",
                    s.sample_id
                )));
            }
            if !seen.insert(s.sample_id) {
                return Err(Error::Config(alloc::format!(
                    "duplicate sample id {}",
                    s.sample_id
                )));
            }
            class_counts[s.observed_label] += 1;
        }
        Ok(Dataset {
            samples,
            num_classes,
            class_counts,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Per-class sample counts by observed label.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.samples.iter().map(|s| s.sample_id)
    }

    /// Splits off the first `n_per_class` samples of every observed class
    /// (in stored order), returning `(selected, remainder)`.
    pub fn split_per_class(&self, n_per_class: usize) -> Result<(Dataset, Dataset)> {
        if let Some(c) = self.class_counts.iter().position(|&n| n < n_per_class) {
            return Err(Error::Config(alloc::format!(
                "class {c} has {} samples, cannot split off {n_per_class}",
                self.class_counts[c]
            )));
        }
        let mut taken = vec![0usize; self.num_classes];
        let mut head = Vec::new();
        let mut rest = Vec::new();
        for s in &self.samples {
            if taken[s.observed_label] < n_per_class {
                taken[s.observed_label] += 1;
                head.push(s.clone());
            } else {
                rest.push(s.clone());
            }
        }
        Ok((
            Dataset::from_samples(head, self.num_classes)?,
            Dataset::from_samples(rest, self.num_classes)?,
        ))
    }

    /// The training-side view: features, observed labels, and ids only.
    /// Hidden labels and noise flags stay behind.
    pub fn training_view(&self) -> TrainingView {
        let dim = self.feature_dim();
        let mut inputs = Vec::with_capacity(self.samples.len() * dim);
        let mut labels = Vec::with_capacity(self.samples.len());
        let mut sample_ids = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            inputs.extend_from_slice(&s.features);
            labels.push(s.observed_label);
            sample_ids.push(s.sample_id);
        }
        TrainingView {
            inputs,
            labels,
            sample_ids,
            input_dim: dim,
            num_classes: self.num_classes,
        }
    }
}

/// What training is allowed to see: no true labels, no noise flags.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingView {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<u64>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl TrainingView {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copies rows `rows` into the provided gather buffers.
    pub fn gather(&self, rows: &[usize], inputs: &mut Vec<f64>, labels: &mut Vec<usize>) {
        inputs.clear();
        labels.clear();
        for &r in rows {
            inputs.extend_from_slice(&self.inputs[r * self.input_dim..(r + 1) * self.input_dim]);
            labels.push(self.labels[r]);
        }
    }
}

/// Generates a clean, balanced blob dataset: `n_per_class` Gaussian samples
/// around each class center, grouped by class, ids `0..K*n`.
pub fn generate_blobs(
    num_classes: usize,
    n_per_class: usize,
    dim: usize,
    geometry: &BlobGeometry,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if n_per_class < 1 {
        return Err(Error::Config("need at least one sample per class".into()));
    }
    if dim < 2 {
        return Err(Error::Config("need at least two feature dimensions".into()));
    }
    let centers = geometry.resolve(num_classes, dim)?;
    let mut rng = seeded(seed, Stream::DataGen);
    let mut samples = Vec::with_capacity(num_classes * n_per_class);
    let mut next_id = 0u64;
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            let features: Vec<f64> = center
                .iter()
                .map(|&mu| {
                    let z: f64 = rng.sample(StandardNormal);
                    mu + geometry.std_dev * z
                })
                .collect();
            samples.push(Sample {
                features,
                observed_label: c,
                true_label: c,
                is_noisy: false,
                sample_id: next_id,
            });
            next_id += 1;
        }
    }
    Dataset::from_samples(samples, num_classes)
}

/// Thins a balanced dataset into an exponential long tail: class `i` keeps
/// `round(n_0 * mu^i)` samples (a seeded random subset, original order kept),
/// with `mu = IF^(-1/(K-1))`. Class 0 is the head.
pub fn apply_imbalance(dataset: &Dataset, imbalance_factor: f64, seed: u64) -> Result<Dataset> {
    if imbalance_factor < 1.0 || imbalance_factor.is_nan() {
        return Err(Error::Config("imbalance factor must be >= 1".into()));
    }
    let k = dataset.num_classes;
    let n0 = dataset.class_counts[0];
    if dataset.class_counts.iter().any(|&n| n != n0) {
        return Err(Error::Config(
            "imbalance expects a balanced input dataset".into(),
        ));
    }
    let mu = decay(imbalance_factor, k);
    let mut keep = Vec::with_capacity(k);
    for i in 0..k {
        let n_i = fmath::round(n0 as f64 * fmath::powf(mu, i as f64)) as usize;
        if n_i < 1 {
            return Err(Error::Config(alloc::format!(
                "imbalance factor {imbalance_factor} would leave class {i} empty \
                 (round({n0} * {mu:.6}^{i}) < 1)"
            )));
        }
        keep.push(n_i);
    }

    let mut rng = seeded(seed, Stream::Imbalance);
    let mut selected: Vec<usize> = Vec::new();
    for (c, &keep_n) in keep.iter().enumerate() {
        let class_rows: Vec<usize> = dataset
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.observed_label == c)
            .map(|(i, _)| i)
            .collect();
        if keep_n == class_rows.len() {
            selected.extend_from_slice(&class_rows);
        } else {
            let mut chosen: Vec<usize> = class_rows
                .choose_multiple(&mut rng, keep_n)
                .copied()
                .collect();
            chosen.sort_unstable();
            selected.extend_from_slice(&chosen);
        }
    }
    selected.sort_unstable();
    let samples = selected
        .into_iter()
        .map(|i| dataset.samples[i].clone())
        .collect();
    Dataset::from_samples(samples, k)
}

/// Corrupts each sample's label independently with probability `p`.
///
/// Uniform mode draws the new label uniformly from the other `K-1` classes.
/// Flip2 first fixes, per true class, a seeded pair of two distinct other
/// classes; corrupted samples receive one of the pair uniformly.
pub fn apply_label_noise(
    dataset: &Dataset,
    noise_rate: f64,
    mode: NoiseMode,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&noise_rate) {
        return Err(Error::Config("noise rate must lie in [0, 1]".into()));
    }
    let k = dataset.num_classes;
    if mode == NoiseMode::Flip2 && k < 3 {
        return Err(Error::Config(
            "flip2 noise needs at least three classes".into(),
        ));
    }
    let mut rng = seeded(seed, Stream::Noise);

    // Per-class corruption targets for flip2, drawn once.
    let flip_pairs: Vec<[usize; 2]> = if mode == NoiseMode::Flip2 {
        (0..k)
            .map(|c| {
                let others: Vec<usize> = (0..k).filter(|&o| o != c).collect();
                let mut pair: Vec<usize> = others.choose_multiple(&mut rng, 2).copied().collect();
                pair.sort_unstable();
                [pair[0], pair[1]]
            })
            .collect()
    } else {
        Vec::new()
    };

    let samples: Vec<Sample> = dataset
        .samples
        .iter()
        .map(|s| {
            let mut out = s.clone();
            if noise_rate > 0.0 && rng.gen::<f64>() < noise_rate {
                let new_label = match mode {
                    NoiseMode::Uniform => {
                        let j = rng.gen_range(0..k - 1);
                        if j >= s.true_label {
                            j + 1
                        } else {
                            j
                        }
                    }
                    NoiseMode::Flip2 => flip_pairs[s.true_label][rng.gen_range(0..2usize)],
                };
                out.observed_label = new_label;
            }
            out.is_noisy = out.observed_label != out.true_label;
            out
        })
        .collect();
    Dataset::from_samples(samples, k)
}

/// Meta-set source: a held-out clean pool, or the training set itself ranked
/// by probe loss (the no-extra-data variant).
pub enum MetaSelection<'a> {
    HeldOutClean {
        pool: &'a Dataset,
    },
    LowProbeLoss {
        train: &'a Dataset,
        curves: &'a LossCurveMatrix,
        prefix_drop: usize,
    },
}

/// Builds a balanced meta set with exactly `m_per_class` samples per class.
///
/// `HeldOutClean` selects uniformly at random from the clean pool.
/// `LowProbeLoss` picks, per observed class, the samples with the smallest
/// mean loss over the recorded curve after dropping the first `prefix_drop`
/// epochs (ties broken by sample id).
pub fn make_meta_set(selection: MetaSelection, m_per_class: usize, seed: u64) -> Result<Dataset> {
    match selection {
        MetaSelection::HeldOutClean { pool } => {
            if pool.samples.iter().any(|s| s.is_noisy) {
                return Err(Error::Config(
                    "held-out meta pool must contain only clean samples".into(),
                ));
            }
            let mut rng = seeded(seed, Stream::MetaSelect);
            let mut chosen = Vec::with_capacity(pool.num_classes * m_per_class);
            for c in 0..pool.num_classes {
                let rows: Vec<usize> = pool
                    .samples
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.observed_label == c)
                    .map(|(i, _)| i)
                    .collect();
                if rows.len() < m_per_class {
                    return Err(short_class_error(c, rows.len(), m_per_class));
                }
                let mut picked: Vec<usize> = rows
                    .choose_multiple(&mut rng, m_per_class)
                    .copied()
                    .collect();
                picked.sort_unstable();
                chosen.extend(picked);
            }
            let samples = chosen
                .into_iter()
                .map(|i| pool.samples[i].clone())
                .collect();
            Dataset::from_samples(samples, pool.num_classes)
        }
        MetaSelection::LowProbeLoss {
            train,
            curves,
            prefix_drop,
        } => {
            let ids: Vec<u64> = train.sample_ids().collect();
            if curves.sample_ids() != ids.as_slice() {
                return Err(Error::Config(
                    "probe curves are not row-aligned with the training set".into(),
                ));
            }
            let means = curves.mean_loss_per_sample(prefix_drop)?;
            let mut chosen = Vec::with_capacity(train.num_classes * m_per_class);
            for c in 0..train.num_classes {
                let mut rows: Vec<usize> = train
                    .samples
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.observed_label == c)
                    .map(|(i, _)| i)
                    .collect();
                if rows.len() < m_per_class {
                    return Err(short_class_error(c, rows.len(), m_per_class));
                }
                rows.sort_by(|&a, &b| {
                    means[a]
                        .partial_cmp(&means[b])
                        .unwrap_or(core::cmp::Ordering::Equal)
                        .then(train.samples[a].sample_id.cmp(&train.samples[b].sample_id))
                });
                let mut picked: Vec<usize> = rows[..m_per_class].to_vec();
                picked.sort_unstable();
                chosen.extend(picked);
            }
            let samples = chosen
                .into_iter()
                .map(|i| train.samples[i].clone())
                .collect();
            Dataset::from_samples(samples, train.num_classes)
        }
    }
}

fn short_class_error(class: usize, have: usize, want: usize) -> Error {
    Error::Config(alloc::format!(
        "class {class} has only {have} candidates for a meta set of {want} per class"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(k: usize, n: usize, seed: u64) -> Dataset {
        generate_blobs(k, n, 2, &BlobGeometry::default(), seed).unwrap()
    }

    #[test]
    fn blobs_are_balanced_clean_and_deterministic() {
        let a = blobs(3, 100, 42);
        assert_eq!(a.len(), 300);
        assert_eq!(a.class_counts(), &[100, 100, 100]);
        assert!(a
            .samples()
            .iter()
            .all(|s| !s.is_noisy && s.true_label == s.observed_label));
        let b = blobs(3, 100, 42);
        assert_eq!(a, b);
        let c = blobs(3, 100, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn blob_class_means_sit_near_centers() {
        let geometry = BlobGeometry::default();
        let n = 500;
        let data = generate_blobs(3, n, 2, &geometry, 7).unwrap();
        let centers = geometry.resolve(3, 2).unwrap();
        let bound = 3.0 * geometry.std_dev / (n as f64).sqrt();
        for (c, center) in centers.iter().enumerate() {
            let mut mean = [0.0f64; 2];
            for s in data.samples().iter().filter(|s| s.true_label == c) {
                mean[0] += s.features[0];
                mean[1] += s.features[1];
            }
            for (m, &ctr) in mean.iter_mut().zip(center) {
                *m /= n as f64;
                assert!(
                    (*m - ctr).abs() <= bound,
                    "class {c}: mean {m} vs center {ctr} (bound {bound})"
                );
            }
        }
    }

    #[test]
    fn degenerate_geometry_is_rejected() {
        let geometry = BlobGeometry {
            separation: 1.0,
            std_dev: 0.0,
            centers: Some(vec![vec![0.0, 0.0], vec![0.0, 0.0]]),
        };
        match generate_blobs(2, 10, 2, &geometry, 1) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn imbalance_identity_when_factor_is_one() {
        let data = blobs(3, 50, 9);
        let thinned = apply_imbalance(&data, 1.0, 3).unwrap();
        assert_eq!(data, thinned);
    }

    #[test]
    fn imbalance_counts_follow_the_exponential_formula() {
        let data = blobs(10, 500, 5);
        let thinned = apply_imbalance(&data, 100.0, 11).unwrap();
        let mu = 100f64.powf(-1.0 / 9.0);
        let expect: Vec<usize> = (0..10)
            .map(|i| (500.0 * mu.powi(i)).round() as usize)
            .collect();
        assert_eq!(thinned.class_counts(), expect.as_slice());
        assert_eq!(thinned.class_counts()[9], 5);
        // Counts nonincreasing, head/tail ratio within rounding of IF.
        for w in thinned.class_counts().windows(2) {
            assert!(w[0] >= w[1]);
        }
        let ratio = thinned.class_counts()[0] as f64 / thinned.class_counts()[9] as f64;
        assert!((ratio - 100.0).abs() / 100.0 < 0.1);
    }

    #[test]
    fn two_class_imbalance_closed_form() {
        let data = blobs(2, 100, 6);
        let thinned = apply_imbalance(&data, 10.0, 1).unwrap();
        assert_eq!(thinned.class_counts(), &[100, 10]);
    }

    #[test]
    fn vanishing_tail_is_a_config_error() {
        let data = blobs(3, 4, 2);
        match apply_imbalance(&data, 100.0, 1) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn zero_noise_changes_nothing() {
        let data = blobs(4, 30, 8);
        let noisy = apply_label_noise(&data, 0.0, NoiseMode::Uniform, 77).unwrap();
        assert_eq!(data, noisy);
    }

    #[test]
    fn full_noise_corrupts_every_label() {
        let data = blobs(3, 40, 21);
        let noisy = apply_label_noise(&data, 1.0, NoiseMode::Uniform, 3).unwrap();
        assert!(noisy
            .samples()
            .iter()
            .all(|s| s.is_noisy && s.observed_label != s.true_label));
        assert_eq!(noisy.len(), data.len());
    }

    #[test]
    fn flip2_uses_a_fixed_pair_per_true_class() {
        let data = blobs(5, 200, 31);
        let noisy = apply_label_noise(&data, 0.5, NoiseMode::Flip2, 13).unwrap();
        for c in 0..5 {
            let mut observed: Vec<usize> = noisy
                .samples()
                .iter()
                .filter(|s| s.true_label == c && s.is_noisy)
                .map(|s| s.observed_label)
                .collect();
            observed.sort_unstable();
            observed.dedup();
            assert!(observed.len() <= 2, "class {c} flips into {observed:?}");
            assert!(!observed.contains(&c));
        }
        // Total count is preserved by noise injection.
        assert_eq!(
            noisy.class_counts().iter().sum::<usize>(),
            data.class_counts().iter().sum::<usize>()
        );
    }

    #[test]
    fn flip2_needs_three_classes() {
        let data = blobs(2, 10, 1);
        match apply_label_noise(&data, 0.2, NoiseMode::Flip2, 1) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn held_out_meta_set_is_balanced_clean_and_disjoint() {
        let full = blobs(10, 30, 12);
        let (pool, train) = full.split_per_class(15).unwrap();
        let meta = make_meta_set(MetaSelection::HeldOutClean { pool: &pool }, 10, 4).unwrap();
        assert_eq!(meta.len(), 100);
        assert_eq!(meta.class_counts(), vec![10; 10].as_slice());
        assert!(meta.samples().iter().all(|s| !s.is_noisy));
        let train_ids: alloc::collections::BTreeSet<u64> = train.sample_ids().collect();
        assert!(meta.sample_ids().all(|id| !train_ids.contains(&id)));
    }

    #[test]
    fn meta_set_errors_when_a_class_is_short() {
        let pool = blobs(3, 5, 2);
        match make_meta_set(MetaSelection::HeldOutClean { pool: &pool }, 6, 0) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn low_probe_loss_selection_picks_the_argmin_per_class() {
        let train = blobs(3, 4, 19);
        // Synthetic curves: every sample's loss is 1.0 except one designated
        // sample per class with a strictly smaller mean (columns after the
        // prefix drop decide).
        let n = train.len();
        let epochs = 5;
        let mut losses = vec![1.0f32; n * epochs];
        let winners: Vec<usize> = (0..3)
            .map(|c| {
                train
                    .samples()
                    .iter()
                    .position(|s| s.observed_label == c && s.sample_id % 4 == 2)
                    .unwrap()
            })
            .collect();
        for &row in &winners {
            for t in 2..epochs {
                losses[row * epochs + t] = 0.1;
            }
            // A decoy low value inside the dropped prefix must not count.
            losses[row * epochs] = 1.0;
        }
        let ids: Vec<u64> = train.sample_ids().collect();
        let labels: Vec<u16> = train
            .samples()
            .iter()
            .map(|s| s.observed_label as u16)
            .collect();
        let curves = LossCurveMatrix::new(losses, ids, labels, epochs).unwrap();

        let meta = make_meta_set(
            MetaSelection::LowProbeLoss {
                train: &train,
                curves: &curves,
                prefix_drop: 2,
            },
            1,
            0,
        )
        .unwrap();
        assert_eq!(meta.len(), 3);
        let expect: alloc::collections::BTreeSet<u64> = winners
            .iter()
            .map(|&row| train.samples()[row].sample_id)
            .collect();
        let got: alloc::collections::BTreeSet<u64> = meta.sample_ids().collect();
        assert_eq!(got, expect);
    }
}
