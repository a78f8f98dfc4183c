use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Camera, SpeedCommand};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A preprocessed square HSV frame stored as 8-bit codes (value × 255).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub side: usize,
    pub codes: Vec<u8>,
}

impl Frame {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.dims() {
            [h, w, 3] if h == w => Ok(Frame { side: h, codes: t.data().iter().map(|&v| quantize(v)).collect() }),
            _ => Err(Error::shape("frame", alloc::format!("{:?} is not a square HxWx3 tensor", t.dims()))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.side, self.side, 3], self.codes.iter().map(|&c| c as f64 / 255.0).collect())
            .expect("frame dims")
    }
}

pub fn quantize(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// One training/evaluation example after preprocessing and labeling.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub trip_id: String,
    pub camera: Camera,
    pub tick: u32,
    pub timestamp_s: f64,
    /// Oldest first; the current frame is last.
    pub frames: Vec<Frame>,
    pub steering_deg: f64,
    pub speed_mps: f64,
    pub next_speed_mps: f64,
    pub window: Vec<f64>,
    pub command: SpeedCommand,
}

impl Record {
    pub fn current_frame(&self) -> &Frame {
        self.frames.last().expect("records carry at least one frame")
    }
}
