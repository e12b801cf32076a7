//! Run-directory layout and its artifact files.
//!
//! A completed run directory contains:
//!
//! ```text
//! config.json       effective run configuration
//! train.csv/.json   biased training set
//! meta.csv/.json    meta set
//! test.csv/.json    clean balanced test set
//! curves.pacv       probe loss curves (runs that probed)
//! classifier.ckpt   final classifier parameters
//! curvenet.ckpt     final weight-net parameters (kind recorded in its header)
//! history.csv       per-epoch trajectory (includes wall-time columns)
//! metrics.json      final evaluation summary
//! reports/          emitted report CSVs (see `reports`)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use probeweight_core::biasgen::BiasConfig;
use probeweight_core::curvenet::CurveNetConfig;
use probeweight_core::meta::{AllocConfig, AllocHistory};
use probeweight_core::probe::ProbeConfig;
use serde::{Deserialize, Serialize};

/// Which training method a run used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ce,
    MwnetTransient,
    Curvenet,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ce => "ce",
            Method::MwnetTransient => "mwnet_transient",
            Method::Curvenet => "curvenet",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to reproduce and report on one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub seed: u64,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub classifier_hidden: Vec<usize>,
    pub bias: Option<BiasConfig>,
    pub probe: Option<ProbeConfig>,
    pub alloc: AllocConfig,
    pub curvenet: Option<CurveNetConfig>,
    pub transient_hidden: Option<usize>,
}

impl RunConfig {
    pub fn classifier_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.feature_dim];
        dims.extend_from_slice(&self.classifier_hidden);
        dims.push(self.num_classes);
        dims
    }
}

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating run dir {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            anyhow::bail!("run dir {} does not exist", root.display());
        }
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn write_config(&self, config: &RunConfig) -> Result<()> {
        let json = serde_json::to_string_pretty(config)?;
        fs::write(self.path("config.json"), json)?;
        Ok(())
    }

    pub fn read_config(&self) -> Result<RunConfig> {
        let path = self.path("config.json");
        let json =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&json)?)
    }

    pub fn write_history(&self, history: &AllocHistory, num_classes: usize) -> Result<()> {
        write_history_csv(&self.path("history.csv"), history, num_classes)
    }

    pub fn write_metrics(&self, metrics: &RunMetrics) -> Result<()> {
        let json = serde_json::to_string_pretty(metrics)?;
        fs::write(self.path("metrics.json"), json)?;
        Ok(())
    }

    pub fn read_metrics(&self) -> Result<RunMetrics> {
        let path = self.path("metrics.json");
        let json =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&json)?)
    }
}

/// Final per-run evaluation written to `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub method: Method,
    pub imbalance_factor: f64,
    pub noise_rate: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_class_accuracy: Vec<f64>,
    /// Test-set confusion counts, one row per true class.
    pub confusion: Vec<Vec<usize>>,
    pub skip_layers: usize,
    pub theta_steps: u64,
    pub mean_theta_step_ms: f64,
    pub probe_seconds: f64,
    pub train_seconds: f64,
}

/// Columns: epoch, losses, Θ bookkeeping (counts and nanoseconds, exact
/// integers), then per-class group-weight means. Wall-time columns make this
/// file non-reproducible across runs; everything else is deterministic.
pub fn write_history_csv(path: &Path, history: &AllocHistory, num_classes: usize) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec![
        "epoch".to_string(),
        "train_loss".to_string(),
        "meta_loss".to_string(),
        "test_accuracy".to_string(),
        "theta_updates".to_string(),
        "theta_steps".to_string(),
        "theta_step_nanos".to_string(),
    ];
    for c in 0..num_classes {
        header.push(format!("mean_w_clean_{c}"));
    }
    for c in 0..num_classes {
        header.push(format!("mean_w_noisy_{c}"));
    }
    writer.write_record(&header)?;

    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let fmt_mean = |v: f64| {
        if v.is_nan() {
            String::new()
        } else {
            format!("{v}")
        }
    };
    for e in &history.epochs {
        let mut record = vec![
            e.epoch.to_string(),
            format!("{}", e.train_loss),
            fmt_opt(e.meta_loss),
            fmt_opt(e.test_accuracy),
            e.theta_updates.to_string(),
            e.theta_steps.to_string(),
            e.theta_step_nanos.to_string(),
        ];
        match &e.group_weights {
            Some(gw) => {
                record.extend(gw.clean_mean.iter().map(|&v| fmt_mean(v)));
                record.extend(gw.noisy_mean.iter().map(|&v| fmt_mean(v)));
            }
            None => record.extend(std::iter::repeat_n(String::new(), 2 * num_classes)),
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads back the Θ-step totals from `history.csv` (for the timing report).
pub fn read_history_timing(path: &Path) -> Result<(usize, u64, u64)> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let steps_col = headers
        .iter()
        .position(|h| h == "theta_steps")
        .context("history.csv lacks a theta_steps column")?;
    let nanos_col = headers
        .iter()
        .position(|h| h == "theta_step_nanos")
        .context("history.csv lacks a theta_step_nanos column")?;
    let mut epochs = 0;
    let mut steps = 0u64;
    let mut nanos = 0u64;
    for record in reader.records() {
        let record = record?;
        epochs += 1;
        steps += record[steps_col].parse::<u64>()?;
        nanos += record[nanos_col].parse::<u64>()?;
    }
    Ok((epochs, steps, nanos))
}
