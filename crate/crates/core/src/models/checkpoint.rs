use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CheckpointError, Error, Result};
use crate::models::config::ModelConfig;
use crate::models::net::Model;

pub const MAGIC: &[u8; 4] = b"EMVC";
pub const VERSION: u32 = 1;

/// A loss-only setting whose stored value was replaced when loading.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigOverride {
    pub key: &'static str,
    pub stored: f64,
    pub applied: f64,
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = model.config().to_text();
    put_u32(&mut out, text.len());
    out.extend_from_slice(text.as_bytes());
    let params = model.params();
    put_u32(&mut out, params.len());
    for p in params.iter() {
        put_u32(&mut out, p.name.len());
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.dims().len());
        for &d in p.value.dims() {
            put_u32(&mut out, d);
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> core::result::Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> core::result::Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn str(&mut self, what: &'static str) -> core::result::Result<&'a str, CheckpointError> {
        let n = self.u32()? as usize;
        core::str::from_utf8(self.take(n)?).map_err(|_| CheckpointError::Utf8(what))
    }
}

/// Reads the stored configuration without decoding tensors.
pub fn read_config(bytes: &[u8]) -> Result<ModelConfig> {
    let mut r = Reader { buf: bytes, pos: 0 };
    header(&mut r)
}

fn header(r: &mut Reader<'_>) -> Result<ModelConfig> {
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    let text = r.str("config")?;
    ModelConfig::from_text(text).map_err(|e| match e {
        Error::Config(msg) => CheckpointError::Incompatible(msg).into(),
        other => other,
    })
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let config = header(&mut r)?;
    let mut model = Model::zeroed(config)?;
    read_tensors(&mut r, &mut model)?;
    Ok(model)
}

/// Loads a checkpoint under a caller-supplied configuration.
///
/// Differences in loss-only settings are applied and reported; any
/// architectural difference is an error.
pub fn decode_with(bytes: &[u8], config: &ModelConfig) -> Result<(Model, Vec<ConfigOverride>)> {
    let mut model = decode(bytes)?;
    if !model.config().same_architecture(config) {
        return Err(CheckpointError::Incompatible(String::from(
            "requested configuration describes a different network than the checkpoint",
        ))
        .into());
    }
    let overrides = model
        .config()
        .loss_differences(config)
        .into_iter()
        .map(|(key, stored, applied)| ConfigOverride { key, stored, applied })
        .collect();
    model.set_config_unchecked(config.clone());
    Ok((model, overrides))
}

fn read_tensors(r: &mut Reader<'_>, model: &mut Model) -> Result<()> {
    let count = r.u32()? as usize;
    let mut seen = alloc::vec![false; model.params().len()];
    for _ in 0..count {
        let name = r.str("tensor name")?;
        let id = model
            .params()
            .find(name)
            .ok_or_else(|| CheckpointError::UnexpectedTensor(name.into()))?;
        if core::mem::replace(&mut seen[id.index()], true) {
            return Err(CheckpointError::DuplicateTensor(name.into()).into());
        }
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(CheckpointError::Incompatible(alloc::format!("tensor `{name}` has rank {rank}")).into());
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let t = model.params_mut().get_mut(id);
        if dims != t.dims() {
            return Err(CheckpointError::DimMismatch {
                name: name.into(),
                expected: t.dims().to_vec(),
                found: dims,
            }
            .into());
        }
        let raw = r.take(4 * t.len())?;
        for (v, b) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            let x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if !x.is_finite() {
                return Err(Error::NonFinite("checkpoint tensor"));
            }
            *v = x as f64;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        let id = model.params().ids().nth(i).expect("index in range");
        return Err(CheckpointError::MissingTensor(model.params().name(id).into()).into());
    }
    if r.pos != r.buf.len() {
        return Err(CheckpointError::Trailing(r.buf.len() - r.pos).into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::config::ModelKind;
    use crate::rng;
    use crate::tensor::Tensor;
    use rand::Rng as _;

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in [ModelKind::BaseSteering, ModelKind::SpeedCommand, ModelKind::MultiModal] {
            let m = Model::new(ModelConfig::toy(kind), 21).unwrap();
            let bytes = encode(&m);
            let back = decode(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(encode(&back), bytes);
            let mut r = rng::seeded(1);
            for _ in 0..10 {
                let img = Tensor::new(&[16, 16, 3], (0..768).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
                let w = [r.random_range(0.0..20.0); 10];
                let input = match kind {
                    ModelKind::BaseSteering => crate::models::ModelInput::Frame(&img),
                    ModelKind::SpeedCommand => crate::models::ModelInput::Sequence(core::slice::from_ref(&img)),
                    ModelKind::MultiModal => crate::models::ModelInput::FrameAndSpeeds(&img, &w),
                };
                assert_eq!(m.predict(input).unwrap(), back.predict(input).unwrap());
            }
        }
    }

    #[test]
    fn truncation_and_corruption() {
        let m = Model::new(ModelConfig::toy(ModelKind::BaseSteering), 2).unwrap();
        let bytes = encode(&m);
        for cut in [0, 3, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Checkpoint(CheckpointError::Truncated(_)))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(CheckpointError::BadMagic))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(CheckpointError::UnsupportedVersion(9)))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(Error::Checkpoint(CheckpointError::Trailing(1)))));
    }

    #[test]
    fn loss_override_warns_architecture_change_fails() {
        let mut stored = ModelConfig::toy(ModelKind::MultiModal);
        stored.task_weight = 0.5;
        let m = Model::new(stored.clone(), 3).unwrap();
        let bytes = encode(&m);
        let mut wanted = stored.clone();
        wanted.task_weight = 1.0;
        let (loaded, warnings) = decode_with(&bytes, &wanted).unwrap();
        assert_eq!(warnings, [ConfigOverride { key: "task_weight", stored: 0.5, applied: 1.0 }]);
        assert_eq!(loaded.config().task_weight, 1.0);
        assert_eq!(loaded.params(), m.params());

        let mut other = stored;
        other.lstm_hidden += 1;
        other.speed_encoder[0] = 9;
        assert!(matches!(decode_with(&bytes, &other), Err(Error::Checkpoint(CheckpointError::Incompatible(_)))));
    }
}
