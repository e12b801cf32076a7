//! Report emission from completed run artifacts.
//!
//! Every report is a pure function of the files in the run directory, so
//! rerunning `bench report` reproduces each file bit for bit (wall-clock
//! derived `timing.csv` aside, its inputs too are artifacts). This module and
//! the files it writes are the only consumers of `is_noisy` and `true_label`.
//!
//! Emitted into `<run-dir>/reports/`:
//!
//! - `confusion.csv`: K x K test-set confusion counts.
//! - `weights_by_group.csv`: per (observed class, noise flag): count, mean
//!   and population std of the final sample weights.
//! - `weights.csv`: raw per-sample weights behind the group statistics.
//! - `curve_groups.csv`: per epoch and group (clean/noisy x head/tail by
//!   observed class): mean probe loss and population variance. Only for runs
//!   that probed.
//! - `timing.csv`: skip-layer setting, Θ-step count, mean Θ-step wall time
//!   in milliseconds.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use probeweight_core::biasgen::Dataset;
use probeweight_core::meta::GroupWeightStats;
use probeweight_core::metrics;
use probeweight_core::nn::{self, Batch, Mlp};
use probeweight_core::probe::{normalize_curves, LossCurveMatrix, NormalizedCurves};
use probeweight_core::weightnet::{FeatureKind, FeatureRows, WeightNet};

use crate::checkpoint;
use crate::curve_file;
use crate::dataset_io;
use crate::rundir::{read_history_timing, RunConfig, RunDir};

/// Final per-sample weights over the training set, recomputed from artifacts.
pub fn sample_weights(
    weight_net: &WeightNet,
    classifier: &Mlp,
    train: &probeweight_core::biasgen::TrainingView,
    curves: Option<&NormalizedCurves>,
) -> Result<Vec<f64>> {
    let weights = match weight_net.feature_kind() {
        FeatureKind::None => weight_net
            .forward(FeatureRows::empty(), &train.labels)
            .map_err(|e| anyhow::anyhow!("{e}"))?,
        FeatureKind::Curves => {
            let curves = curves.context("curve-conditioned weights need normalized curves")?;
            let rows = FeatureRows {
                rows: curves.features(),
                width: curves.curve_len(),
            };
            weight_net
                .forward(rows, &train.labels)
                .map_err(|e| anyhow::anyhow!("{e}"))?
        }
        FeatureKind::TransientLoss => {
            let batch = Batch::new(&train.inputs, &train.labels, train.input_dim)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let logits =
                nn::forward_logits(classifier, &batch).map_err(|e| anyhow::anyhow!("{e}"))?;
            let losses = nn::per_sample_loss(&logits, &train.labels, train.num_classes)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            weight_net
                .forward(
                    FeatureRows {
                        rows: &losses,
                        width: 1,
                    },
                    &train.labels,
                )
                .map_err(|e| anyhow::anyhow!("{e}"))?
        }
    };
    Ok(weights)
}

/// Per-class clean/noisy mean weights (NaN for empty groups).
pub fn group_weight_means(weights: &[f64], dataset: &Dataset) -> GroupWeightStats {
    let k = dataset.num_classes();
    let mut sums = vec![0.0f64; 2 * k];
    let mut counts = vec![0usize; 2 * k];
    for (w, s) in weights.iter().zip(dataset.samples()) {
        let idx = s.observed_label + if s.is_noisy { k } else { 0 };
        sums[idx] += w;
        counts[idx] += 1;
    }
    let mean = |i: usize| {
        if counts[i] == 0 {
            f64::NAN
        } else {
            sums[i] / counts[i] as f64
        }
    };
    GroupWeightStats {
        clean_mean: (0..k).map(mean).collect(),
        noisy_mean: (0..k).map(|c| mean(c + k)).collect(),
    }
}

fn require(run: &RunDir, names: &[&str]) -> Result<()> {
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !run.path(n).exists())
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() {
        bail!(
            "run dir {} is missing artifacts: {}",
            run.root.display(),
            missing.join(", ")
        );
    }
    Ok(())
}

/// Emits every report derivable from the run's artifacts.
pub fn emit_reports(run_dir: &Path) -> Result<Vec<String>> {
    let run = RunDir::open(run_dir)?;
    let config = run.read_config()?;

    let mut needed = vec![
        "config.json",
        "train.csv",
        "classifier.ckpt",
        "curvenet.ckpt",
        "history.csv",
    ];
    let probed = config.probe.is_some();
    if probed {
        needed.push("curves.pacv");
    }
    require(&run, &needed)?;

    fs::create_dir_all(run.reports_dir())?;
    let mut written = Vec::new();

    let (classifier, _) = checkpoint::load_classifier(&run.path("classifier.ckpt"))?;
    let (weight_net, _) = checkpoint::load_weight_net(&run.path("curvenet.ckpt"))?;
    let (train, _) = dataset_io::load_dataset(&run.path("train.csv"))?;

    // Confusion needs a held-out test set; standalone allocate runs have none.
    if run.path("test.csv").exists() {
        let (test, _) = dataset_io::load_dataset(&run.path("test.csv"))?;
        written.push(write_confusion(&run, &classifier, &test)?);
    }

    let curves = if probed {
        Some(curve_file::load(&run.path("curves.pacv"))?)
    } else {
        None
    };
    let normalized = match (&curves, &config) {
        (Some(c), cfg) => {
            let probe_cfg = cfg
                .probe
                .as_ref()
                .expect("probed runs carry a probe config");
            Some(
                normalize_curves(
                    c,
                    cfg.num_classes,
                    probe_cfg.prefix_drop,
                    probe_cfg.std_normalize,
                )
                .map_err(|e| anyhow::anyhow!("{e}"))?,
            )
        }
        _ => None,
    };

    written.push(write_weights_by_group(
        &run,
        &weight_net,
        &classifier,
        &train,
        normalized.as_ref(),
    )?);
    written.push(write_weights_raw(
        &run,
        &weight_net,
        &classifier,
        &train,
        normalized.as_ref(),
    )?);

    if let Some(curves) = &curves {
        written.push(write_curve_groups(&run, curves, &train)?);
    }

    written.push(write_timing(&run, &config)?);
    Ok(written)
}

fn write_confusion(run: &RunDir, classifier: &Mlp, test: &Dataset) -> Result<String> {
    let eval =
        metrics::evaluate(classifier, &test.training_view()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let k = eval.num_classes;
    let path = run.reports_dir().join("confusion.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    let mut header = vec!["true_class".to_string()];
    header.extend((0..k).map(|c| format!("pred_{c}")));
    writer.write_record(&header)?;
    for c in 0..k {
        let mut record = vec![c.to_string()];
        record.extend(eval.class_row(c).iter().map(|n| n.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok("confusion.csv".into())
}

fn write_weights_by_group(
    run: &RunDir,
    weight_net: &WeightNet,
    classifier: &Mlp,
    train: &Dataset,
    curves: Option<&NormalizedCurves>,
) -> Result<String> {
    let view = train.training_view();
    let weights = sample_weights(weight_net, classifier, &view, curves)?;
    let k = train.num_classes();

    let path = run.reports_dir().join("weights_by_group.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["class", "is_noisy", "count", "mean_weight", "std_weight"])?;
    for class in 0..k {
        for noisy in [false, true] {
            let group: Vec<f64> = weights
                .iter()
                .zip(train.samples())
                .filter(|(_, s)| s.observed_label == class && s.is_noisy == noisy)
                .map(|(&w, _)| w)
                .collect();
            let n = group.len();
            let (mean, std) = if n == 0 {
                (String::new(), String::new())
            } else {
                let mean = group.iter().sum::<f64>() / n as f64;
                let var = group.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n as f64;
                (format!("{mean}"), format!("{}", var.sqrt()))
            };
            writer.write_record([
                class.to_string(),
                if noisy { "1".into() } else { "0".to_string() },
                n.to_string(),
                mean,
                std,
            ])?;
        }
    }
    writer.flush()?;
    Ok("weights_by_group.csv".into())
}

/// Raw per-sample weights backing `weights_by_group.csv`.
fn write_weights_raw(
    run: &RunDir,
    weight_net: &WeightNet,
    classifier: &Mlp,
    train: &Dataset,
    curves: Option<&NormalizedCurves>,
) -> Result<String> {
    let view = train.training_view();
    let weights = sample_weights(weight_net, classifier, &view, curves)?;
    let path = run.reports_dir().join("weights.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["sample_id", "observed_label", "is_noisy", "weight"])?;
    for (w, s) in weights.iter().zip(train.samples()) {
        writer.write_record([
            s.sample_id.to_string(),
            s.observed_label.to_string(),
            if s.is_noisy {
                "1".into()
            } else {
                "0".to_string()
            },
            format!("{w}"),
        ])?;
    }
    writer.flush()?;
    Ok("weights.csv".into())
}

fn write_curve_groups(run: &RunDir, curves: &LossCurveMatrix, train: &Dataset) -> Result<String> {
    let ids: Vec<u64> = train.sample_ids().collect();
    if curves.sample_ids() != ids.as_slice() {
        bail!("curves.pacv is not row-aligned with train.csv");
    }
    let k = train.num_classes();
    let head = 0;
    let tail = k - 1;
    let groups: [(&str, usize, bool); 4] = [
        ("clean-head", head, false),
        ("noisy-head", head, true),
        ("clean-tail", tail, false),
        ("noisy-tail", tail, true),
    ];

    let path = run.reports_dir().join("curve_groups.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["epoch", "group", "mean_loss", "variance"])?;
    for epoch in 0..curves.epochs() {
        for (name, class, noisy) in groups {
            let values: Vec<f64> = train
                .samples()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.observed_label == class && s.is_noisy == noisy)
                .map(|(i, _)| curves.row(i)[epoch] as f64)
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            writer.write_record([
                epoch.to_string(),
                name.to_string(),
                format!("{mean}"),
                format!("{var}"),
            ])?;
        }
    }
    writer.flush()?;
    Ok("curve_groups.csv".into())
}

fn write_timing(run: &RunDir, config: &RunConfig) -> Result<String> {
    let (_, steps, nanos) = read_history_timing(&run.path("history.csv"))?;
    let mean_ms = if steps == 0 {
        0.0
    } else {
        nanos as f64 / steps as f64 / 1e6
    };
    let path = run.reports_dir().join("timing.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["skip_layers", "theta_steps", "mean_step_ms"])?;
    writer.write_record([
        config.alloc.skip_layers.to_string(),
        steps.to_string(),
        format!("{mean_ms}"),
    ])?;
    writer.flush()?;
    Ok("timing.csv".into())
}
