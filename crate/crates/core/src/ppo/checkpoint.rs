//! Binary checkpoint container, little-endian throughout:
//!
//! ```text
//! b"POWRLCKP"  u32 version
//! u32 n        n bytes of JSON metadata (configuration echo)
//! for actor, then critic:
//!   u32 layers
//!   per layer: u32 fan_in, u32 fan_out, f64[fan_in*fan_out] weights (row-major), f64[fan_out] bias
//! ```

use super::nn::{Dense, Mlp};
use super::policy::PolicyParams;
use super::update::PPOConfig;
use crate::controller::ControllerConfig;
use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"POWRLCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Refuse absurd sizes from corrupt headers before allocating.
const MAX_LAYER_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub grid: String,
    pub input_dim: usize,
    pub n_actions: usize,
    pub feature_layout: u32,
    pub seed: u64,
    pub ppo: PPOConfig,
    pub controller: ControllerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: PolicyParams,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (supported: {CHECKPOINT_VERSION})")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint metadata does not match its weights: {0}")]
    Inconsistent(String),
}

fn corrupt(e: impl std::fmt::Display) -> CheckpointError {
    CheckpointError::Corrupt(e.to_string())
}

fn write_net(w: &mut impl Write, net: &Mlp) -> std::io::Result<()> {
    w.write_u32::<LE>(net.layers.len() as u32)?;
    for layer in &net.layers {
        w.write_u32::<LE>(layer.fan_in() as u32)?;
        w.write_u32::<LE>(layer.fan_out() as u32)?;
        for &x in layer.w.iter() {
            w.write_f64::<LE>(x)?;
        }
        for &x in layer.b.iter() {
            w.write_f64::<LE>(x)?;
        }
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v).map_err(corrupt)?;
    Ok(v)
}

fn read_net(r: &mut impl Read) -> Result<Mlp, CheckpointError> {
    let n = r.read_u32::<LE>().map_err(corrupt)? as usize;
    if n == 0 || n > 64 {
        return Err(corrupt(format!("{n} layers")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let fan_in = r.read_u32::<LE>().map_err(corrupt)? as usize;
        let fan_out = r.read_u32::<LE>().map_err(corrupt)? as usize;
        if (fan_in as u64) * (fan_out as u64) > MAX_LAYER_ELEMENTS || fan_in == 0 || fan_out == 0 {
            return Err(corrupt(format!("layer shape {fan_in}x{fan_out}")));
        }
        let w = Array2::from_shape_vec((fan_in, fan_out), read_f64s(r, fan_in * fan_out)?).map_err(corrupt)?;
        let b = Array1::from(read_f64s(r, fan_out)?);
        layers.push(Dense { w, b });
    }
    for pair in layers.windows(2) {
        if pair[0].fan_out() != pair[1].fan_in() {
            return Err(corrupt("consecutive layer shapes do not chain"));
        }
    }
    Ok(Mlp { layers })
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let meta = serde_json::to_vec(&ck.meta).expect("metadata serializes");
    buf.write_u32::<LE>(CHECKPOINT_VERSION).unwrap();
    buf.write_u32::<LE>(meta.len() as u32).unwrap();
    buf.extend_from_slice(&meta);
    write_net(&mut buf, &ck.params.actor).unwrap();
    write_net(&mut buf, &ck.params.critic).unwrap();
    buf
}

pub fn decode_checkpoint(mut bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let r = &mut bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LE>().map_err(corrupt)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let n = r.read_u32::<LE>().map_err(corrupt)? as usize;
    if n > r.len() {
        return Err(corrupt("metadata length exceeds file"));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&r[..n]).map_err(corrupt)?;
    *r = &r[n..];
    let actor = read_net(r)?;
    let critic = read_net(r)?;
    if !r.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", r.len())));
    }
    if actor.input_dim() != meta.input_dim || critic.input_dim() != meta.input_dim {
        return Err(CheckpointError::Inconsistent("input dimension".into()));
    }
    if actor.output_dim() != meta.n_actions || critic.output_dim() != 1 {
        return Err(CheckpointError::Inconsistent("output dimension".into()));
    }
    Ok(Checkpoint { meta, params: PolicyParams { actor, critic } })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(ck)).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    decode_checkpoint(&bytes)
}
