//! Checkpoint and training-state files.

use std::path::Path;

use emvc_core::models::{checkpoint, ConfigOverride, Model, ModelConfig};
use emvc_core::optim::OptimizerState;

use crate::error::{CliError, Result};

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    write_bytes(path, &checkpoint::encode(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(checkpoint::decode(&bytes)?)
}

/// Loads under `config`, reporting loss-only settings that replaced stored ones.
pub fn load_checkpoint_with(path: &Path, config: &ModelConfig) -> Result<(Model, Vec<ConfigOverride>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(checkpoint::decode_with(&bytes, config)?)
}

const STATE_MAGIC: &[u8; 4] = b"EMVT";
const STATE_VERSION: u32 = 1;

/// Everything beyond the weights that a resumed run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub best_val: f64,
    pub optimizer: OptimizerState,
}

pub fn encode_state(s: &TrainState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(STATE_MAGIC);
    out.extend_from_slice(&STATE_VERSION.to_le_bytes());
    out.extend_from_slice(&s.step.to_le_bytes());
    out.extend_from_slice(&s.best_val.to_le_bytes());
    out.extend_from_slice(&s.optimizer.step.to_le_bytes());
    out.extend_from_slice(&(s.optimizer.m.len() as u32).to_le_bytes());
    for (m, v) in s.optimizer.m.iter().zip(&s.optimizer.v) {
        out.extend_from_slice(&(m.len() as u32).to_le_bytes());
        for x in m.iter().chain(v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_state(bytes: &[u8]) -> Result<TrainState> {
    let bad = |what: &str| CliError::Operational(format!("training state: {what}"));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != STATE_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let u64_of = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
    if u32_of(take(4)?) != STATE_VERSION {
        return Err(bad("unsupported version"));
    }
    let step = u64_of(take(8)?);
    let best_val = f64::from_bits(u64_of(take(8)?));
    let opt_step = u64_of(take(8)?);
    let count = u32_of(take(4)?) as usize;
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for _ in 0..count {
        let n = u32_of(take(4)?) as usize;
        let raw = take(16 * n)?;
        let vals: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_bits(u64_of(b))).collect();
        m.push(vals[..n].to_vec());
        v.push(vals[n..].to_vec());
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(TrainState { step, best_val, optimizer: OptimizerState { step: opt_step, m, v } })
}

pub fn save_state(path: &Path, s: &TrainState) -> Result<()> {
    write_bytes(path, &encode_state(s))
}

pub fn load_state(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_state(&bytes)
}
