//! Dataset CSV serialization.
//!
//! One CSV per dataset with header
//! `sample_id,true_label,observed_label,is_noisy,f0..f{d-1}` plus a JSON
//! sidecar (same stem, `.json` extension) carrying the class count, feature
//! dimension, bias recipe, and seed. Floats are written in Rust's shortest
//! round-trip form, so a save/load cycle is lossless.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use probeweight_core::biasgen::{BiasConfig, Dataset, Sample};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub bias: Option<BiasConfig>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save_dataset(dataset: &Dataset, sidecar: &DatasetSidecar, csv_path: &Path) -> Result<()> {
    if dataset.num_classes() != sidecar.num_classes || dataset.feature_dim() != sidecar.feature_dim
    {
        bail!("sidecar disagrees with the dataset on shape");
    }
    let mut writer = csv::Writer::from_path(csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    let d = dataset.feature_dim();
    let mut header = vec![
        "sample_id".to_string(),
        "true_label".to_string(),
        "observed_label".to_string(),
        "is_noisy".to_string(),
    ];
    header.extend((0..d).map(|i| format!("f{i}")));
    writer.write_record(&header)?;
    for s in dataset.samples() {
        let mut record = vec![
            s.sample_id.to_string(),
            s.true_label.to_string(),
            s.observed_label.to_string(),
            if s.is_noisy { "1" } else { "0" }.to_string(),
        ];
        record.extend(s.features.iter().map(|v| format!("{v}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let json = serde_json::to_string_pretty(sidecar)?;
    fs::write(sidecar_path(csv_path), json)?;
    Ok(())
}

pub fn load_dataset(csv_path: &Path) -> Result<(Dataset, DatasetSidecar)> {
    let sidecar_file = sidecar_path(csv_path);
    let sidecar: DatasetSidecar = serde_json::from_str(
        &fs::read_to_string(&sidecar_file)
            .with_context(|| format!("reading sidecar {}", sidecar_file.display()))?,
    )?;
    let mut reader = csv::Reader::from_path(csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let headers = reader.headers()?.clone();
    let d = headers.len().saturating_sub(4);
    if d != sidecar.feature_dim {
        bail!(
            "csv has {d} feature columns but sidecar declares {}",
            sidecar.feature_dim
        );
    }
    let mut samples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse_err = || format!("{}:{}", csv_path.display(), line + 2);
        let sample_id: u64 = record[0].parse().with_context(parse_err)?;
        let true_label: usize = record[1].parse().with_context(parse_err)?;
        let observed_label: usize = record[2].parse().with_context(parse_err)?;
        let is_noisy = match &record[3] {
            "0" => false,
            "1" => true,
            other => bail!("{}: bad is_noisy value {other:?}", parse_err()),
        };
        let mut features = Vec::with_capacity(d);
        for i in 0..d {
            features.push(record[4 + i].parse::<f64>().with_context(parse_err)?);
        }
        samples.push(Sample {
            features,
            observed_label,
            true_label,
            is_noisy,
            sample_id,
        });
    }
    let dataset = Dataset::from_samples(samples, sidecar.num_classes)
        .map_err(|e| anyhow::anyhow!("{}: {e}", csv_path.display()))?;
    Ok((dataset, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use probeweight_core::biasgen::{
        apply_imbalance, apply_label_noise, generate_blobs, BlobGeometry, NoiseMode,
    };

    #[test]
    fn save_load_round_trip_preserves_everything() {
        let clean = generate_blobs(3, 40, 4, &BlobGeometry::default(), 99).unwrap();
        let biased = apply_label_noise(
            &apply_imbalance(&clean, 5.0, 99).unwrap(),
            0.3,
            NoiseMode::Uniform,
            99,
        )
        .unwrap();
        let sidecar = DatasetSidecar {
            num_classes: 3,
            feature_dim: 4,
            seed: 99,
            bias: Some(BiasConfig {
                imbalance_factor: 5.0,
                noise_rate: 0.3,
                noise_mode: NoiseMode::Uniform,
                seed: 99,
            }),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        save_dataset(&biased, &sidecar, &path).unwrap();
        let (loaded, loaded_sidecar) = load_dataset(&path).unwrap();
        assert_eq!(biased, loaded);
        assert_eq!(loaded_sidecar.num_classes, 3);
        assert_eq!(loaded_sidecar.bias.as_ref().unwrap().imbalance_factor, 5.0);
    }
}
