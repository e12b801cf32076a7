//! Parameter checkpoints: a JSON header followed by a raw f32 blob.
//!
//! Layout: `u32` header length (little-endian), the UTF-8 JSON header, then
//! every parameter as `f32` little-endian in the structure's canonical block
//! order. The header carries a version field, the structure kind, its config,
//! and the seed/step the checkpoint was taken at.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use probeweight_core::check::ParamVector;
use probeweight_core::curvenet::{init_curvenet, CurveNetConfig};
use probeweight_core::nn::{Activation, Layer, Mlp};
use probeweight_core::weightnet::{TransientNet, WeightNet};
use serde::{Deserialize, Serialize};

pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub kind: String,
    pub seed: u64,
    pub step: u64,
    pub config: serde_json::Value,
}

fn write_checkpoint<P: ParamVector>(
    path: &Path,
    header: &CheckpointHeader,
    params: &P,
) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let mut file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(&(json.len() as u32).to_le_bytes())?;
    file.write_all(&json)?;
    for i in 0..params.param_count() {
        file.write_all(&(params.param(i) as f32).to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f32>)> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut json = vec![0u8; header_len];
    file.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)
        .with_context(|| format!("parsing checkpoint header of {}", path.display()))?;
    if header.version != CKPT_VERSION {
        bail!("unsupported checkpoint version {}", header.version);
    }
    let mut blob = Vec::new();
    file.read_to_end(&mut blob)?;
    if blob.len() % 4 != 0 {
        bail!(
            "checkpoint blob of {} is not a whole number of f32s",
            path.display()
        );
    }
    let values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

fn fill_params<P: ParamVector>(params: &mut P, values: &[f32], what: &str) -> Result<()> {
    if values.len() != params.param_count() {
        bail!(
            "{what} checkpoint has {} parameters, structure needs {}",
            values.len(),
            params.param_count()
        );
    }
    for (i, &v) in values.iter().enumerate() {
        params.set_param(i, v as f64);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassifierShape {
    dims: Vec<usize>,
}

fn classifier_dims(net: &Mlp) -> Vec<usize> {
    let mut dims = vec![net.input_dim()];
    dims.extend(net.layers().iter().map(|l| l.out_dim));
    dims
}

/// Builds a standard classifier (ReLU hidden, identity output) with zeroed
/// parameters for the given widths.
pub fn classifier_skeleton(dims: &[usize]) -> Result<Mlp> {
    let mut layers = Vec::new();
    for i in 0..dims.len() - 1 {
        let act = if i + 2 == dims.len() {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(Layer::zeros(dims[i], dims[i + 1], act));
    }
    Mlp::from_layers(layers).map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn save_classifier(path: &Path, net: &Mlp, seed: u64, step: u64) -> Result<()> {
    let header = CheckpointHeader {
        version: CKPT_VERSION,
        kind: "classifier".into(),
        seed,
        step,
        config: serde_json::to_value(ClassifierShape {
            dims: classifier_dims(net),
        })?,
    };
    write_checkpoint(path, &header, net)
}

pub fn load_classifier(path: &Path) -> Result<(Mlp, CheckpointHeader)> {
    let (header, values) = read_checkpoint(path)?;
    if header.kind != "classifier" {
        bail!(
            "expected a classifier checkpoint, found kind {:?}",
            header.kind
        );
    }
    let shape: ClassifierShape = serde_json::from_value(header.config.clone())?;
    let mut net = classifier_skeleton(&shape.dims)?;
    fill_params(&mut net, &values, "classifier")?;
    Ok((net, header))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransientShape {
    hidden_width: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstantShape {
    value: f64,
}

pub fn save_weight_net(path: &Path, net: &WeightNet, seed: u64, step: u64) -> Result<()> {
    let (kind, config) = match net {
        WeightNet::Curve(p) => ("curvenet", serde_json::to_value(p.config())?),
        WeightNet::Transient(t) => (
            "transient",
            serde_json::to_value(TransientShape {
                hidden_width: t.hidden_width(),
            })?,
        ),
        WeightNet::Constant(v) => (
            "constant",
            serde_json::to_value(ConstantShape { value: *v })?,
        ),
    };
    let header = CheckpointHeader {
        version: CKPT_VERSION,
        kind: kind.into(),
        seed,
        step,
        config,
    };
    write_checkpoint(path, &header, net)
}

pub fn load_weight_net(path: &Path) -> Result<(WeightNet, CheckpointHeader)> {
    let (header, values) = read_checkpoint(path)?;
    let mut net = match header.kind.as_str() {
        "curvenet" => {
            let config: CurveNetConfig = serde_json::from_value(header.config.clone())?;
            WeightNet::Curve(init_curvenet(&config, 0).map_err(|e| anyhow::anyhow!("{e}"))?)
        }
        "transient" => {
            let shape: TransientShape = serde_json::from_value(header.config.clone())?;
            WeightNet::Transient(
                TransientNet::init(shape.hidden_width, 0).map_err(|e| anyhow::anyhow!("{e}"))?,
            )
        }
        "constant" => {
            let shape: ConstantShape = serde_json::from_value(header.config.clone())?;
            WeightNet::Constant(shape.value)
        }
        other => bail!("unknown weight net checkpoint kind {other:?}"),
    };
    fill_params(&mut net, &values, &header.kind)?;
    Ok((net, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use probeweight_core::rng::{seeded, Stream};

    #[test]
    fn classifier_round_trip_preserves_f32_values() {
        let mut rng = seeded(3, Stream::ClassifierInit);
        let net = Mlp::init(&[4, 8, 3], &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("classifier.ckpt");
        save_classifier(&path, &net, 3, 17).unwrap();
        let (loaded, header) = load_classifier(&path).unwrap();
        assert_eq!(header.step, 17);
        assert_eq!(loaded.param_count(), net.param_count());
        for i in 0..ParamVector::param_count(&net) {
            assert_eq!(loaded.param(i), net.param(i) as f32 as f64);
        }
        // A second save of the loaded net is byte-identical (f32 fixpoint).
        let path2 = dir.path().join("classifier2.ckpt");
        save_classifier(&path2, &loaded, 3, 17).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn weight_net_round_trip_covers_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let config = CurveNetConfig::new(12, 5);
        let nets = vec![
            WeightNet::Curve(init_curvenet(&config, 7).unwrap()),
            WeightNet::Transient(TransientNet::init(100, 7).unwrap()),
            WeightNet::Constant(1.0),
        ];
        for (i, net) in nets.into_iter().enumerate() {
            let path = dir.path().join(format!("wn{i}.ckpt"));
            save_weight_net(&path, &net, 7, 0).unwrap();
            let (loaded, _) = load_weight_net(&path).unwrap();
            assert_eq!(
                ParamVector::param_count(&loaded),
                ParamVector::param_count(&net)
            );
            for p in 0..ParamVector::param_count(&net) {
                assert_eq!(loaded.param(p), net.param(p) as f32 as f64);
            }
        }
    }
}
