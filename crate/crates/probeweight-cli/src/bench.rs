//! Experiment harness: grid runs over imbalance factors x noise rates x
//! seeds x methods, with resumable manifests and CSV summaries.
//!
//! Each grid cell builds its own biased train set, meta set, and clean
//! balanced test set (identical across methods for the same `(IF, p, seed)`),
//! trains with the requested method, and leaves a complete run directory
//! behind. The summary ends with one MA row per method: the unweighted mean
//! accuracy over the whole grid, the single-number robustness score.
//!
//! Cells run in parallel; `PROBEWEIGHT_THREADS` caps the worker count. A
//! manifest (updated by atomic rename) records completed cells so reruns skip
//! them; resuming under a different config is refused via a config hash.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use probeweight_core::biasgen::{
    apply_imbalance, apply_label_noise, generate_blobs, make_meta_set, BiasConfig, BlobGeometry,
    Dataset, MetaSelection, NoiseMode, TrainingView,
};
use probeweight_core::curvenet::{init_curvenet, CurveNetConfig};
use probeweight_core::meta::{
    allocate_train, train_ce, AllocConfig, AllocHistory, AllocObserver, EpochExtras,
};
use probeweight_core::metrics;
use probeweight_core::nn::Mlp;
use probeweight_core::probe::{normalize_curves, probe_train, NormalizedCurves, ProbeConfig};
use probeweight_core::rng::{seeded, Stream};
use probeweight_core::weightnet::{TransientNet, WeightNet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{save_classifier, save_weight_net};
use crate::clock::InstantClock;
use crate::curve_file;
use crate::dataset_io::{save_dataset, DatasetSidecar};
use crate::reports::{group_weight_means, sample_weights};
use crate::rundir::{Method, RunConfig, RunDir, RunMetrics};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecipe {
    pub num_classes: usize,
    /// Clean pool per class before imbalance thins it.
    pub train_per_class: usize,
    /// Held-out clean pool per class the meta set is drawn from.
    pub meta_pool_per_class: usize,
    pub test_per_class: usize,
    pub feature_dim: usize,
    pub geometry: BlobGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaStrategy {
    HeldOutClean,
    LowProbeLoss,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveNetWidths {
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub head_hidden: usize,
}

impl Default for CurveNetWidths {
    fn default() -> Self {
        CurveNetWidths {
            embed_dim: 64,
            encoder_hidden: 128,
            head_hidden: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetRecipe,
    pub imbalance_factors: Vec<f64>,
    pub noise_rates: Vec<f64>,
    pub noise_mode: NoiseMode,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub probe: ProbeConfig,
    pub alloc: AllocConfig,
    pub classifier_hidden: Vec<usize>,
    pub curvenet: CurveNetWidths,
    pub transient_hidden: usize,
    pub meta_per_class: usize,
    pub meta_strategy: MetaStrategy,
    /// Record group-weight means every epoch (costs a full weight-net pass
    /// per epoch) instead of only at the final one.
    pub track_epoch_weights: bool,
    pub out_dir: String,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.imbalance_factors.is_empty()
            || self.noise_rates.is_empty()
            || self.seeds.is_empty()
            || self.methods.is_empty()
        {
            bail!("imbalance factors, noise rates, seeds, and methods must all be nonempty");
        }
        Ok(())
    }

    /// A ready-to-edit desk-scale template, using the validated recipe: a
    /// held-out clean meta set of 50 per class and the weight net frozen at
    /// epoch 3 (the desk-scale classifier converges in a handful of epochs;
    /// meta updates past convergence overfit the small meta set and collapse
    /// the weights).
    pub fn template() -> Self {
        ExperimentConfig {
            dataset: DatasetRecipe {
                num_classes: 3,
                train_per_class: 2000,
                meta_pool_per_class: 50,
                test_per_class: 500,
                feature_dim: 2,
                geometry: BlobGeometry::default(),
            },
            imbalance_factors: vec![1.0, 10.0],
            noise_rates: vec![0.0, 0.4],
            noise_mode: NoiseMode::Uniform,
            methods: vec![Method::Ce, Method::MwnetTransient, Method::Curvenet],
            seeds: vec![1, 2, 3],
            probe: ProbeConfig::default(),
            alloc: AllocConfig {
                freeze_at: Some(3),
                ..AllocConfig::default()
            },
            classifier_hidden: vec![64, 32],
            curvenet: CurveNetWidths::default(),
            transient_hidden: 100,
            meta_per_class: 50,
            meta_strategy: MetaStrategy::HeldOutClean,
            track_epoch_weights: false,
            out_dir: "bench-out".into(),
        }
    }
}

/// Grid-cell coordinates.
#[derive(Debug, Clone)]
pub struct Cell {
    pub imbalance_factor: f64,
    pub noise_rate: f64,
    pub seed: u64,
    pub method: Method,
}

impl Cell {
    pub fn key(&self) -> String {
        format!(
            "{}_if{}_p{}_seed{}",
            self.method, self.imbalance_factor, self.noise_rate, self.seed
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    completed: BTreeSet<String>,
}

/// Hash of the experiment config with the output directory masked out, so a
/// moved output tree still resumes.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut masked = config.clone();
    masked.out_dir = String::new();
    let json = serde_json::to_string(&masked).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}

fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    let tmp = out_dir.join("manifest.json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(manifest)?)?;
    fs::rename(&tmp, manifest_path(out_dir))?;
    Ok(())
}

fn mix_seed(seed: u64, imbalance_factor: f64, noise_rate: f64) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in seed
        .to_le_bytes()
        .iter()
        .chain(imbalance_factor.to_bits().to_le_bytes().iter())
        .chain(noise_rate.to_bits().to_le_bytes().iter())
    {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Builds one cell's (biased train, meta pool, clean test) datasets. The
/// split depends only on `(seed, IF, p)`, never on the method, so methods
/// compare on identical data.
pub fn build_cell_data(
    recipe: &DatasetRecipe,
    imbalance_factor: f64,
    noise_rate: f64,
    noise_mode: NoiseMode,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let data_seed = mix_seed(seed, imbalance_factor, noise_rate);
    let total_per_class =
        recipe.train_per_class + recipe.meta_pool_per_class + recipe.test_per_class;
    let pool = generate_blobs(
        recipe.num_classes,
        total_per_class,
        recipe.feature_dim,
        &recipe.geometry,
        data_seed,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let (train_clean, rest) = pool
        .split_per_class(recipe.train_per_class)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let (meta_pool, test) = rest
        .split_per_class(recipe.meta_pool_per_class)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let thinned = apply_imbalance(&train_clean, imbalance_factor, data_seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let biased = apply_label_noise(&thinned, noise_rate, noise_mode, data_seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((biased, meta_pool, test))
}

/// Per-epoch evaluation hook: test accuracy when a test view exists, group
/// weights at the final epoch (and every epoch when tracking is on). This is
/// reporting-side code; it may read the noise flags.
pub struct HarnessObserver<'a> {
    pub test_view: Option<&'a TrainingView>,
    pub train_dataset: &'a Dataset,
    pub train_view: &'a TrainingView,
    pub curves: Option<&'a NormalizedCurves>,
    pub final_epoch: usize,
    pub every_epoch: bool,
}

impl AllocObserver for HarnessObserver<'_> {
    fn epoch_end(&mut self, epoch: usize, classifier: &Mlp, weight_net: &WeightNet) -> EpochExtras {
        let test_accuracy = self.test_view.and_then(|view| {
            metrics::evaluate(classifier, view)
                .map(|e| e.accuracy())
                .ok()
        });
        let group_weights = if self.every_epoch || epoch == self.final_epoch {
            sample_weights(weight_net, classifier, self.train_view, self.curves)
                .ok()
                .map(|w| group_weight_means(&w, self.train_dataset))
        } else {
            None
        };
        EpochExtras {
            test_accuracy,
            group_weights,
        }
    }
}

/// Everything a finished cell leaves in memory for the caller.
pub struct CellOutcome {
    pub metrics: RunMetrics,
    pub history: AllocHistory,
}

/// Runs one grid cell into `run_dir`, writing the full artifact set.
pub fn run_cell(config: &ExperimentConfig, cell: &Cell, run_dir: &Path) -> Result<CellOutcome> {
    let run = RunDir::create(run_dir)?;
    let recipe = &config.dataset;
    let k = recipe.num_classes;
    let (train, meta_pool, test) = build_cell_data(
        recipe,
        cell.imbalance_factor,
        cell.noise_rate,
        config.noise_mode,
        cell.seed,
    )?;
    let data_seed = mix_seed(cell.seed, cell.imbalance_factor, cell.noise_rate);
    let train_view = train.training_view();
    let test_view = test.training_view();

    let mut probe_config = config.probe.clone();
    probe_config.seed = cell.seed;
    let needs_probe =
        cell.method == Method::Curvenet || config.meta_strategy == MetaStrategy::LowProbeLoss;

    let classifier_dims: Vec<usize> = {
        let mut dims = vec![recipe.feature_dim];
        dims.extend_from_slice(&config.classifier_hidden);
        dims.push(k);
        dims
    };

    let probe_start = Instant::now();
    let curves = if needs_probe {
        let mut rng = seeded(cell.seed, Stream::ClassifierInit);
        let probe_net =
            Mlp::init(&classifier_dims, &mut rng).map_err(|e| anyhow::anyhow!("{e}"))?;
        let curves = probe_train(&train_view, probe_net, &probe_config)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        curve_file::save(&curves, &run.path("curves.pacv"))?;
        Some(curves)
    } else {
        None
    };
    let probe_seconds = probe_start.elapsed().as_secs_f64();

    let meta_set = match config.meta_strategy {
        MetaStrategy::HeldOutClean => make_meta_set(
            MetaSelection::HeldOutClean { pool: &meta_pool },
            config.meta_per_class,
            data_seed,
        ),
        MetaStrategy::LowProbeLoss => make_meta_set(
            MetaSelection::LowProbeLoss {
                train: &train,
                curves: curves.as_ref().expect("low-probe-loss strategy probes"),
                prefix_drop: probe_config.prefix_drop,
            },
            config.meta_per_class,
            data_seed,
        ),
    }
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let meta_view = meta_set.training_view();

    let bias = BiasConfig {
        imbalance_factor: cell.imbalance_factor,
        noise_rate: cell.noise_rate,
        noise_mode: config.noise_mode,
        seed: data_seed,
    };
    save_dataset(
        &train,
        &DatasetSidecar {
            num_classes: k,
            feature_dim: recipe.feature_dim,
            seed: data_seed,
            bias: Some(bias.clone()),
        },
        &run.path("train.csv"),
    )?;
    let clean_sidecar = |seed| DatasetSidecar {
        num_classes: k,
        feature_dim: recipe.feature_dim,
        seed,
        bias: None,
    };
    save_dataset(&meta_set, &clean_sidecar(data_seed), &run.path("meta.csv"))?;
    save_dataset(&test, &clean_sidecar(data_seed), &run.path("test.csv"))?;

    let normalized = match (&curves, cell.method) {
        (Some(c), Method::Curvenet) => Some(
            normalize_curves(c, k, probe_config.prefix_drop, probe_config.std_normalize)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        ),
        _ => None,
    };

    let mut alloc_config = config.alloc.clone();
    alloc_config.seed = cell.seed;

    let mut rng = seeded(cell.seed, Stream::ClassifierInit);
    let classifier_init =
        Mlp::init(&classifier_dims, &mut rng).map_err(|e| anyhow::anyhow!("{e}"))?;

    let curvenet_config = normalized.as_ref().map(|nc| CurveNetConfig {
        curve_len: nc.curve_len(),
        num_classes: k,
        embed_dim: config.curvenet.embed_dim,
        encoder_hidden: config.curvenet.encoder_hidden,
        head_hidden: config.curvenet.head_hidden,
    });
    let weight_net = match cell.method {
        Method::Ce => WeightNet::Constant(1.0),
        Method::MwnetTransient => WeightNet::Transient(
            TransientNet::init(config.transient_hidden, cell.seed)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        ),
        Method::Curvenet => WeightNet::Curve(
            init_curvenet(
                curvenet_config.as_ref().expect("curvenet runs probe"),
                cell.seed,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?,
        ),
    };

    let mut observer = HarnessObserver {
        test_view: Some(&test_view),
        train_dataset: &train,
        train_view: &train_view,
        curves: normalized.as_ref(),
        final_epoch: alloc_config.epochs.saturating_sub(1),
        every_epoch: config.track_epoch_weights,
    };

    let train_start = Instant::now();
    let (classifier, final_weight_net, history) = match cell.method {
        Method::Ce => {
            let (net, history) =
                train_ce(&train_view, classifier_init, &alloc_config, &mut observer)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
            (net, WeightNet::Constant(1.0), history)
        }
        _ => {
            let mut clock = InstantClock::new();
            let outcome = allocate_train(
                &train_view,
                &meta_view,
                normalized.as_ref(),
                classifier_init,
                weight_net,
                &alloc_config,
                &mut clock,
                &mut observer,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            (outcome.classifier, outcome.weight_net, outcome.history)
        }
    };
    let train_seconds = train_start.elapsed().as_secs_f64();

    let eval = metrics::evaluate(&classifier, &test_view).map_err(|e| anyhow::anyhow!("{e}"))?;
    let run_config = RunConfig {
        method: cell.method,
        seed: cell.seed,
        num_classes: k,
        feature_dim: recipe.feature_dim,
        classifier_hidden: config.classifier_hidden.clone(),
        bias: Some(bias),
        probe: needs_probe.then(|| probe_config.clone()),
        alloc: alloc_config.clone(),
        curvenet: curvenet_config,
        transient_hidden: (cell.method == Method::MwnetTransient)
            .then_some(config.transient_hidden),
    };
    run.write_config(&run_config)?;
    save_classifier(
        &run.path("classifier.ckpt"),
        &classifier,
        cell.seed,
        alloc_config.epochs as u64,
    )?;
    save_weight_net(
        &run.path("curvenet.ckpt"),
        &final_weight_net,
        cell.seed,
        history.total_theta_steps(),
    )?;
    run.write_history(&history, k)?;

    let metrics = RunMetrics {
        method: cell.method,
        imbalance_factor: cell.imbalance_factor,
        noise_rate: cell.noise_rate,
        seed: cell.seed,
        accuracy: eval.accuracy(),
        correct: eval.correct,
        total: eval.total,
        per_class_accuracy: eval.per_class_accuracy(),
        confusion: (0..k).map(|c| eval.class_row(c).to_vec()).collect(),
        skip_layers: alloc_config.skip_layers,
        theta_steps: history.total_theta_steps(),
        mean_theta_step_ms: history.mean_theta_step_nanos() / 1e6,
        probe_seconds,
        train_seconds,
    };
    run.write_metrics(&metrics)?;

    Ok(CellOutcome { metrics, history })
}

/// Grid run result counts.
#[derive(Debug)]
pub struct GridReport {
    pub ran: usize,
    pub skipped: usize,
    pub summary_path: PathBuf,
}

fn worker_count() -> usize {
    std::env::var("PROBEWEIGHT_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs (or resumes) the whole grid and writes `summary.csv`.
pub fn run_grid(config: &ExperimentConfig, out_dir: &Path) -> Result<GridReport> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let hash = config_hash(config);
    let manifest = match fs::read_to_string(manifest_path(out_dir)) {
        Ok(json) => {
            let manifest: Manifest = serde_json::from_str(&json)?;
            if manifest.config_hash != hash {
                bail!(
                    "refusing to resume: {} was produced by a different config \
                     (hash {} != {})",
                    out_dir.display(),
                    manifest.config_hash,
                    hash
                );
            }
            manifest
        }
        Err(_) => Manifest {
            config_hash: hash,
            completed: BTreeSet::new(),
        },
    };

    let mut cells = Vec::new();
    for &imbalance_factor in &config.imbalance_factors {
        for &noise_rate in &config.noise_rates {
            for &seed in &config.seeds {
                for &method in &config.methods {
                    cells.push(Cell {
                        imbalance_factor,
                        noise_rate,
                        seed,
                        method,
                    });
                }
            }
        }
    }

    let pending: Vec<&Cell> = cells
        .iter()
        .filter(|c| !manifest.completed.contains(&c.key()))
        .collect();
    let skipped = cells.len() - pending.len();
    let ran = pending.len();

    let manifest = Mutex::new(manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()?;
    pool.install(|| {
        pending.par_iter().try_for_each(|cell| -> Result<()> {
            let run_dir = out_dir.join(cell.key());
            run_cell(config, cell, &run_dir)
                .with_context(|| format!("running cell {}", cell.key()))?;
            let mut guard = manifest.lock().expect("manifest mutex");
            guard.completed.insert(cell.key());
            write_manifest(out_dir, &guard)?;
            Ok(())
        })
    })?;

    let summary_path = write_summary(config, out_dir, &cells)?;
    Ok(GridReport {
        ran,
        skipped,
        summary_path,
    })
}

/// Writes `summary.csv`: one row per run plus one MA row per method.
fn write_summary(config: &ExperimentConfig, out_dir: &Path, cells: &[Cell]) -> Result<PathBuf> {
    let path = out_dir.join("summary.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record([
        "row",
        "imbalance_factor",
        "noise_rate",
        "seed",
        "method",
        "accuracy",
        "correct",
        "total",
    ])?;

    let mut per_method: Vec<(Method, Vec<(usize, usize)>)> =
        config.methods.iter().map(|&m| (m, Vec::new())).collect();
    for cell in cells {
        let run = RunDir::open(&out_dir.join(cell.key()))
            .with_context(|| format!("cell {} has no run dir", cell.key()))?;
        let metrics = run.read_metrics()?;
        writer.write_record([
            "run".to_string(),
            format!("{}", cell.imbalance_factor),
            format!("{}", cell.noise_rate),
            cell.seed.to_string(),
            cell.method.to_string(),
            format!("{}", metrics.accuracy),
            metrics.correct.to_string(),
            metrics.total.to_string(),
        ])?;
        if let Some(entry) = per_method.iter_mut().find(|(m, _)| *m == cell.method) {
            entry.1.push((metrics.correct, metrics.total));
        }
    }
    for (method, runs) in &per_method {
        let ma = mean_accuracy(runs);
        writer.write_record([
            "ma".to_string(),
            String::new(),
            String::new(),
            String::new(),
            method.to_string(),
            format!("{ma}"),
            String::new(),
            String::new(),
        ])?;
    }
    writer.flush()?;
    Ok(path)
}

/// Unweighted mean of per-run accuracies, each an exact `correct/total`.
pub fn mean_accuracy(runs: &[(usize, usize)]) -> f64 {
    let sum: f64 = runs
        .iter()
        .map(|&(correct, total)| correct as f64 / total as f64)
        .sum();
    sum / runs.len() as f64
}

/// Recomputes per-method MA from a summary's run rows and checks the stored
/// MA rows match exactly. Returns `(method, ma)` pairs.
pub fn verify_ma(summary_path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::Reader::from_path(summary_path)
        .with_context(|| format!("reading {}", summary_path.display()))?;
    let mut runs: Vec<(String, usize, usize)> = Vec::new();
    let mut stored: Vec<(String, f64)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        match &record[0] {
            "run" => runs.push((
                record[4].to_string(),
                record[6].parse()?,
                record[7].parse()?,
            )),
            "ma" => stored.push((record[4].to_string(), record[5].parse()?)),
            other => bail!("unknown summary row kind {other:?}"),
        }
    }
    let mut out = Vec::new();
    for (method, stored_ma) in stored {
        let counts: Vec<(usize, usize)> = runs
            .iter()
            .filter(|(m, _, _)| *m == method)
            .map(|&(_, c, t)| (c, t))
            .collect();
        if counts.is_empty() {
            bail!("summary has an MA row for {method} but no runs");
        }
        let recomputed = mean_accuracy(&counts);
        if recomputed != stored_ma {
            bail!("MA mismatch for {method}: stored {stored_ma}, recomputed {recomputed}");
        }
        out.push((method, recomputed));
    }
    Ok(out)
}
