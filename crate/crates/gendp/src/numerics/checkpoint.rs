//! Checkpoint file format.
//!
//! Layout: an 8-byte magic (`GENDPCK1`), a little-endian u64 manifest
//! length, a JSON manifest, then the raw payload of little-endian 32-bit
//! floats. The manifest records engine version, seed, model kind, the
//! architecture config, arbitrary extras (vocabulary, lexicons), and one
//! `{name, shape, offset}` record per tensor — offsets are byte positions
//! from the start of the payload. Loading validates every shape against
//! the receiving parameter set and fails loudly on any mismatch.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tensor::ParamSet;

pub const MAGIC: &[u8; 8] = b"GENDPCK1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint manifest malformed: {0}")]
    BadManifest(#[from] serde_json::Error),
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("tensor `{name}` shape mismatch: checkpoint {found:?}, model {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),
    #[error("checkpoint has tensor `{0}` unknown to the model")]
    UnknownTensor(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub engine_version: String,
    pub seed: u64,
    pub model_kind: String,
    pub config: serde_json::Value,
    pub extras: serde_json::Value,
    pub tensors: Vec<TensorRecord>,
}

/// Serializes every parameter (registration order) as f32 payload.
pub fn save(
    path: &Path,
    seed: u64,
    model_kind: &str,
    config: serde_json::Value,
    extras: serde_json::Value,
    params: &ParamSet,
) -> Result<(), CheckpointError> {
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for (_, e) in params.iter() {
        tensors.push(TensorRecord {
            name: e.name().to_string(),
            shape: e.shape().to_vec(),
            offset,
        });
        offset += (e.numel() * 4) as u64;
    }
    let manifest = CheckpointManifest {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        model_kind: model_kind.to_string(),
        config,
        extras,
        tensors,
    };
    let mjson = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + mjson.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(mjson.len() as u64).to_le_bytes());
    out.extend_from_slice(&mjson);
    for (_, e) in params.iter() {
        for &v in e.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// A parsed checkpoint: manifest plus raw payload.
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    payload: Vec<u8>,
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + mlen {
        return Err(CheckpointError::Truncated("manifest".into()));
    }
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes[16..16 + mlen])?;
    let payload = bytes[16 + mlen..].to_vec();
    for t in &manifest.tensors {
        let numel: usize = t.shape.iter().product();
        let end = t.offset as usize + numel * 4;
        if end > payload.len() {
            return Err(CheckpointError::Truncated(format!("tensor `{}`", t.name)));
        }
    }
    Ok(Checkpoint { manifest, payload })
}

impl Checkpoint {
    pub fn tensor_values(&self, rec: &TensorRecord) -> Vec<f64> {
        let numel: usize = rec.shape.iter().product();
        let start = rec.offset as usize;
        (0..numel)
            .map(|i| {
                let o = start + i * 4;
                f32::from_le_bytes(self.payload[o..o + 4].try_into().unwrap()) as f64
            })
            .collect()
    }

    /// Copies every tensor into `params` by name. The checkpoint and the
    /// parameter set must agree exactly: same names, same shapes.
    pub fn apply_to(&self, params: &mut ParamSet) -> Result<(), CheckpointError> {
        for t in &self.manifest.tensors {
            let id = params
                .id(&t.name)
                .map_err(|_| CheckpointError::UnknownTensor(t.name.clone()))?;
            let expected = params.entry(id).shape().to_vec();
            if expected != t.shape {
                return Err(CheckpointError::ShapeMismatch {
                    name: t.name.clone(),
                    expected,
                    found: t.shape.clone(),
                });
            }
            params
                .load_values(id, self.tensor_values(t))
                .expect("shape already validated");
        }
        let have: std::collections::BTreeSet<&str> = self
            .manifest
            .tensors
            .iter()
            .map(|t| t.name.as_str())
            .collect();
        for (_, e) in params.iter() {
            if !have.contains(e.name()) {
                return Err(CheckpointError::MissingTensor(e.name().to_string()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::stream;

    fn sample_params() -> ParamSet {
        let mut rng = stream(3, &[]);
        let mut ps = ParamSet::new();
        ps.register_uniform("a.w", vec![2, 3], 0.1, &mut rng).unwrap();
        ps.register_uniform("b.v", vec![4], 0.1, &mut rng).unwrap();
        ps
    }

    #[test]
    fn roundtrip_preserves_values_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ps = sample_params();
        save(
            &path,
            7,
            "gdp",
            serde_json::json!({"d": 3}),
            serde_json::json!({}),
            &ps,
        )
        .unwrap();
        let ck = load(&path).unwrap();
        assert_eq!(ck.manifest.seed, 7);
        assert_eq!(ck.manifest.model_kind, "gdp");
        let mut ps2 = sample_params();
        // Perturb, then restore from file.
        ps2.data_mut(ps2.id("a.w").unwrap())[0] = 99.0;
        ck.apply_to(&mut ps2).unwrap();
        for ((_, a), (_, b)) in ps.iter().zip(ps2.iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= (*x as f32 as f64 - x).abs() + 1e-12);
                assert_eq!(*y, *x as f32 as f64);
            }
        }
    }

    #[test]
    fn same_params_serialize_bitwise_identically() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let ps = sample_params();
        let cfg = serde_json::json!({"d": 3});
        save(&p1, 7, "gdp", cfg.clone(), serde_json::json!({}), &ps).unwrap();
        save(&p2, 7, "gdp", cfg, serde_json::json!({}), &ps).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn shape_mismatch_fails_loudly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ps = sample_params();
        save(
            &path,
            0,
            "gdp",
            serde_json::json!({}),
            serde_json::json!({}),
            &ps,
        )
        .unwrap();
        let ck = load(&path).unwrap();
        let mut other = ParamSet::new();
        other.register_zeros("a.w", vec![3, 3]).unwrap();
        other.register_zeros("b.v", vec![4]).unwrap();
        assert!(matches!(
            ck.apply_to(&mut other),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn truncated_and_garbage_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::BadMagic)));

        let good = dir.path().join("g.ckpt");
        let ps = sample_params();
        save(
            &good,
            0,
            "gdp",
            serde_json::json!({}),
            serde_json::json!({}),
            &ps,
        )
        .unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::Truncated(_))));
    }
}
