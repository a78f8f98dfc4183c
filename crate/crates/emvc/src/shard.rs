//! Binary shard files holding preprocessed records.
//!
//! Layout (little-endian): magic `EMVS`, u32 version, length-prefixed config
//! hash, length-prefixed preprocessing config text, u32 input side, u32 frames
//! per record, u32 window length, u64 record count, then per record a u32 byte
//! length followed by: trip id (length-prefixed), u8 camera, u32 tick, f64
//! timestamp, steering, speed and next speed, u8 command, window as f64s, and
//! the frames as 8-bit HSV codes.

use std::io::{BufWriter, Write};
use std::path::Path;

use emvc_core::data::{Camera, Frame, Record, SpeedCommand};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"EMVS";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardHeader {
    pub config_hash: String,
    pub config_text: String,
    pub input_side: usize,
    pub seq_len: usize,
    pub window: usize,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn encode_record(r: &Record, out: &mut Vec<u8>) {
    put_str(out, &r.trip_id);
    out.push(Camera::ALL.iter().position(|c| *c == r.camera).expect("known camera") as u8);
    out.extend_from_slice(&r.tick.to_le_bytes());
    for v in [r.timestamp_s, r.steering_deg, r.speed_mps, r.next_speed_mps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(r.command.index() as u8);
    for v in &r.window {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in &r.frames {
        out.extend_from_slice(&f.codes);
    }
}

pub fn encode_shard(header: &ShardHeader, records: &[Record]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, &header.config_hash);
    put_str(&mut out, &header.config_text);
    for v in [header.input_side, header.seq_len, header.window] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    let mut body = Vec::new();
    for r in records {
        if r.frames.len() != header.seq_len
            || r.window.len() != header.window
            || r.frames.iter().any(|f| f.side != header.input_side)
        {
            return Err(CliError::Operational(format!("record {}@{} does not match the shard header", r.trip_id, r.tick)));
        }
        body.clear();
        encode_record(r, &mut body);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
    }
    Ok(out)
}

pub fn write_shard(path: &Path, header: &ShardHeader, records: &[Record]) -> Result<()> {
    let bytes = encode_shard(header, records)?;
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(CliError::Operational(format!("shard truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CliError::Operational("shard: invalid utf-8".into()))
    }
}

pub fn decode_shard(bytes: &[u8]) -> Result<(ShardHeader, Vec<Record>)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(CliError::Operational("not a shard file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CliError::Operational(format!("unsupported shard version {version}")));
    }
    let header = ShardHeader {
        config_hash: c.string()?,
        config_text: c.string()?,
        input_side: c.u32()? as usize,
        seq_len: c.u32()? as usize,
        window: c.u32()? as usize,
    };
    let count = c.u64()? as usize;
    let frame_len = header.input_side * header.input_side * 3;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let start = c.pos;
        let trip_id = c.string()?;
        let camera = *Camera::ALL
            .get(c.u8()? as usize)
            .ok_or_else(|| CliError::Operational("shard: bad camera code".into()))?;
        let tick = c.u32()?;
        let timestamp_s = c.f64()?;
        let steering_deg = c.f64()?;
        let speed_mps = c.f64()?;
        let next_speed_mps = c.f64()?;
        let command = SpeedCommand::from_index(c.u8()? as usize)
            .ok_or_else(|| CliError::Operational("shard: bad command code".into()))?;
        let window = (0..header.window).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        let frames = (0..header.seq_len)
            .map(|_| Ok(Frame { side: header.input_side, codes: c.take(frame_len)?.to_vec() }))
            .collect::<Result<Vec<_>>>()?;
        if c.pos - start != len {
            return Err(CliError::Operational(format!("shard: record length mismatch at byte {start}")));
        }
        records.push(Record { trip_id, camera, tick, timestamp_s, frames, steering_deg, speed_mps, next_speed_mps, window, command });
    }
    if c.pos != bytes.len() {
        return Err(CliError::Operational(format!("shard: {} trailing bytes", bytes.len() - c.pos)));
    }
    Ok((header, records))
}

pub fn read_shard(path: &Path) -> Result<(ShardHeader, Vec<Record>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_shard(&bytes).map_err(|e| match e {
        CliError::Operational(m) => CliError::Operational(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(tick: u32) -> Record {
        Record {
            trip_id: "trip001".into(),
            camera: Camera::Left,
            tick,
            timestamp_s: tick as f64 / 30.0,
            frames: vec![Frame { side: 2, codes: (0..12).collect() }; 2],
            steering_deg: -3.25,
            speed_mps: 10.5,
            next_speed_mps: 10.6,
            window: vec![10.0, 10.25, 10.5],
            command: SpeedCommand::Decelerate,
        }
    }

    #[test]
    fn round_trip_and_truncation() {
        let header = ShardHeader { config_hash: "abc".into(), config_text: "x = 1\n".into(), input_side: 2, seq_len: 2, window: 3 };
        let recs = vec![record(3), record(6)];
        let bytes = encode_shard(&header, &recs).unwrap();
        let (h, r) = decode_shard(&bytes).unwrap();
        assert_eq!((h, r), (header.clone(), recs.clone()));
        for cut in [0, 5, bytes.len() - 1] {
            assert!(decode_shard(&bytes[..cut]).is_err());
        }
        let mut wrong = recs;
        wrong[0].window.pop();
        assert!(encode_shard(&header, &wrong).is_err());
    }
}
