//! Versioned binary model checkpoints.
//!
//! Layout: magic "IMUC", u32 version, u32 JSON length + config JSON, u32
//! blob count, then per parameter: u32 name length, name bytes, u32 value
//! count, f32 LE values. Parameters are written in visitor order and
//! reloaded by name, so a round trip is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{PatternModel, PatternNetConfig, VerificationConfig, VerificationModel};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"IMUC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("checkpoint config: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointConfig {
    Verification(VerificationConfig),
    Pattern(PatternNetConfig),
}

fn write_blobs(
    path: &Path,
    config: &CheckpointConfig,
    blobs: &[(String, Vec<f32>)],
) -> Result<(), CheckpointError> {
    let json = serde_json::to_vec(config)?;
    let mut out = Vec::with_capacity(64 + json.len() + blobs.iter().map(|(n, v)| n.len() + v.len() * 4 + 8).sum::<usize>());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for (name, values) in blobs {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn read_blobs(path: &Path) -> Result<(CheckpointConfig, BTreeMap<String, Vec<f32>>), CheckpointError> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported version {version}")));
    }
    let json_len = r.u32()? as usize;
    let config: CheckpointConfig = serde_json::from_slice(r.take(json_len)?)?;
    let count = r.u32()? as usize;
    let mut blobs = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Format("non-utf8 parameter name".into()))?;
        let n = r.u32()? as usize;
        let raw = r.take(n * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if blobs.insert(name.clone(), values).is_some() {
            return Err(CheckpointError::Format(format!("duplicate parameter {name}")));
        }
    }
    if r.pos != buf.len() {
        return Err(CheckpointError::Format("trailing bytes".into()));
    }
    Ok((config, blobs))
}

fn fill_params(
    mut blobs: BTreeMap<String, Vec<f32>>,
    mut for_each: impl FnMut(&mut dyn FnMut(&str, &mut [f32])),
) -> Result<(), CheckpointError> {
    let mut problems = Vec::new();
    for_each(&mut |name, p| match blobs.remove(name) {
        Some(v) if v.len() == p.len() => p.copy_from_slice(&v),
        Some(v) => problems.push(format!("{name}: stored {} values, model needs {}", v.len(), p.len())),
        None => problems.push(format!("{name}: missing")),
    });
    for name in blobs.keys() {
        problems.push(format!("{name}: not a model parameter"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CheckpointError::Format(problems.join("; ")))
    }
}

pub fn save_verification(path: &Path, model: &VerificationModel<f32>) -> Result<(), CheckpointError> {
    let mut blobs = Vec::new();
    model.visit_params(|name, p| blobs.push((name.to_string(), p.to_vec())));
    write_blobs(path, &CheckpointConfig::Verification(model.config.clone()), &blobs)
}

pub fn load_verification(path: &Path) -> Result<VerificationModel<f32>, CheckpointError> {
    let (config, blobs) = read_blobs(path)?;
    let config = match config {
        CheckpointConfig::Verification(c) => c,
        CheckpointConfig::Pattern(_) => {
            return Err(CheckpointError::Format("pattern checkpoint, expected verification".into()))
        }
    };
    // Initialization is immediately overwritten; the seed is irrelevant.
    let mut model = VerificationModel::new(config, &mut ChaCha8Rng::seed_from_u64(0));
    fill_params(blobs, |f| model.for_each_param(|name, p, _| f(name, p)))?;
    Ok(model)
}

pub fn save_pattern(path: &Path, model: &PatternModel<f32>) -> Result<(), CheckpointError> {
    let mut blobs = Vec::new();
    model.visit_params(|name, p| blobs.push((name.to_string(), p.to_vec())));
    write_blobs(path, &CheckpointConfig::Pattern(model.config.clone()), &blobs)
}

pub fn load_pattern(path: &Path) -> Result<PatternModel<f32>, CheckpointError> {
    let (config, blobs) = read_blobs(path)?;
    let config = match config {
        CheckpointConfig::Pattern(c) => c,
        CheckpointConfig::Verification(_) => {
            return Err(CheckpointError::Format("verification checkpoint, expected pattern".into()))
        }
    };
    let mut model = PatternModel::new(config, &mut ChaCha8Rng::seed_from_u64(0));
    fill_params(blobs, |f| model.for_each_param(|name, p, _| f(name, p)))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verification_fixture() -> VerificationModel<f32> {
        let mut cfg = VerificationConfig::new(5);
        cfg.branches = 3;
        cfg.steps = 12;
        cfg.conv_channels = vec![4, 6];
        cfg.kernels = vec![3, 3];
        VerificationModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(77))
    }

    #[test]
    fn verification_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = verification_fixture();
        save_verification(&path, &model).unwrap();
        let loaded = load_verification(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        let mut original = Vec::new();
        model.visit_params(|n, p| original.push((n.to_string(), p.to_vec())));
        let mut idx = 0;
        loaded.visit_params(|n, p| {
            assert_eq!(original[idx].0, n);
            let bits_a: Vec<u32> = original[idx].1.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = p.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "{n} not bit-identical");
            idx += 1;
        });
        assert_eq!(idx, original.len());
    }

    #[test]
    fn pattern_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pattern.ckpt");
        let model =
            PatternModel::new(PatternNetConfig::new(19, 150), &mut ChaCha8Rng::seed_from_u64(5));
        save_pattern(&path, &model).unwrap();
        let loaded = load_pattern(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_verification(&path, &verification_fixture()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_verification(&path), Err(CheckpointError::Format(_))));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_verification(&path, &verification_fixture()).unwrap();
        assert!(matches!(load_pattern(&path), Err(CheckpointError::Format(_))));
    }
}
