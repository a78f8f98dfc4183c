use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Single frame in, steering angle out.
    BaseSteering,
    /// Frame sequence through a recurrent layer, steering plus a discrete speed command.
    SpeedCommand,
    /// Single frame plus feedback-speed history, steering plus next-frame speed.
    MultiModal,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::BaseSteering => "base",
            ModelKind::SpeedCommand => "command",
            ModelKind::MultiModal => "mmmt",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(ModelKind::BaseSteering),
            "command" => Ok(ModelKind::SpeedCommand),
            "mmmt" => Ok(ModelKind::MultiModal),
            other => Err(Error::Config(format!("unknown model kind `{other}` (expected base, command or mmmt)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

impl ConvSpec {
    pub const fn new(kernel: usize, stride: usize, channels: usize) -> Self {
        ConvSpec { kernel, stride, channels }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Square input side in pixels; frames are squeezed to 1:1 before entry.
    pub input_side: usize,
    pub conv: Vec<ConvSpec>,
    /// Hidden fully connected widths after the convolutions (the head is extra).
    pub fc: Vec<usize>,
    pub lstm_hidden: usize,
    pub seq_len: usize,
    pub speed_window: usize,
    pub speed_encoder: Vec<usize>,
    /// Feedback speeds are divided by this before encoding; the speed head is scaled by it.
    pub speed_norm_mps: f64,
    /// The steering head output is multiplied by this to give degrees.
    pub steering_scale_deg: f64,
    /// Weight of the second task in the composite loss.
    pub task_weight: f64,
    pub angle_weight_slope_deg: f64,
    pub angle_weight_cap: f64,
}

impl ModelConfig {
    /// Full-size network: 128 px input, large early kernels.
    pub fn desk(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            input_side: 128,
            conv: vec![
                ConvSpec::new(11, 4, 24),
                ConvSpec::new(5, 2, 36),
                ConvSpec::new(3, 2, 48),
                ConvSpec::new(3, 1, 64),
                ConvSpec::new(3, 1, 64),
            ],
            fc: vec![512, 128, 32],
            lstm_hidden: 64,
            seq_len: 5,
            speed_window: 10,
            speed_encoder: vec![32, 32],
            speed_norm_mps: 30.0,
            steering_scale_deg: 30.0,
            task_weight: default_task_weight(kind),
            angle_weight_slope_deg: 5.0,
            angle_weight_cap: 4.0,
        }
    }

    /// 48 px network sized for single-core training against the synthetic road world.
    pub fn compact(kind: ModelKind) -> Self {
        ModelConfig {
            input_side: 48,
            conv: vec![
                ConvSpec::new(7, 2, 12),
                ConvSpec::new(5, 2, 16),
                ConvSpec::new(3, 1, 24),
                ConvSpec::new(3, 1, 24),
                ConvSpec::new(3, 1, 32),
            ],
            fc: vec![64, 32, 16],
            lstm_hidden: 32,
            ..Self::desk(kind)
        }
    }

    /// 16 px network for gradient checks and overfit tests.
    pub fn toy(kind: ModelKind) -> Self {
        ModelConfig {
            input_side: 16,
            conv: vec![
                ConvSpec::new(3, 1, 4),
                ConvSpec::new(3, 2, 6),
                ConvSpec::new(3, 1, 8),
                ConvSpec::new(2, 1, 8),
                ConvSpec::new(2, 1, 8),
            ],
            fc: vec![16, 12, 8],
            lstm_hidden: 8,
            seq_len: 3,
            speed_encoder: vec![8, 8],
            ..Self::desk(kind)
        }
    }

    /// Spatial extents after each convolution, validating the stack.
    pub fn conv_extents(&self) -> Result<Vec<usize>> {
        let mut side = self.input_side;
        let mut out = Vec::with_capacity(self.conv.len());
        for (i, c) in self.conv.iter().enumerate() {
            if c.kernel == 0 || c.stride == 0 || c.channels == 0 {
                return Err(Error::Config(format!("conv layer {i} has a zero kernel, stride or channel count")));
            }
            if c.kernel > side {
                return Err(Error::Config(format!("conv layer {i}: kernel {} exceeds input extent {side}", c.kernel)));
            }
            side = (side - c.kernel) / c.stride + 1;
            out.push(side);
        }
        Ok(out)
    }

    /// Length of the flattened convolutional feature vector.
    pub fn conv_features(&self) -> Result<usize> {
        let side = self.conv_extents()?.last().copied().unwrap_or(self.input_side);
        let channels = self.conv.last().map_or(3, |c| c.channels);
        Ok(side * side * channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side < 2 {
            return Err(Error::Config("input_side must be at least 2".into()));
        }
        self.conv_extents()?;
        if self.fc.is_empty() || self.fc.contains(&0) {
            return Err(Error::Config("fc needs at least one nonzero width".into()));
        }
        if self.speed_window == 0 {
            return Err(Error::Config("speed_window must be at least 1".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("seq_len must be at least 1".into()));
        }
        if self.lstm_hidden == 0 {
            return Err(Error::Config("lstm_hidden must be at least 1".into()));
        }
        if self.speed_encoder.is_empty() || self.speed_encoder.contains(&0) {
            return Err(Error::Config("speed_encoder needs at least one nonzero width".into()));
        }
        if !(self.task_weight >= 0.0) || !self.task_weight.is_finite() {
            return Err(Error::Config(format!("task_weight must be >= 0, got {}", self.task_weight)));
        }
        for (name, v) in [
            ("speed_norm_mps", self.speed_norm_mps),
            ("steering_scale_deg", self.steering_scale_deg),
            ("angle_weight_slope_deg", self.angle_weight_slope_deg),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.angle_weight_cap >= 1.0) {
            return Err(Error::Config(format!("angle_weight_cap must be >= 1, got {}", self.angle_weight_cap)));
        }
        Ok(())
    }

    /// Same network topology and output scaling; loss-only settings may differ.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        let strip = |c: &ModelConfig| ModelConfig {
            task_weight: 0.0,
            angle_weight_slope_deg: 1.0,
            angle_weight_cap: 1.0,
            ..c.clone()
        };
        strip(self) == strip(other)
    }

    /// Loss-only settings that differ between `self` and `other`, as
    /// `(key, self value, other value)`.
    pub fn loss_differences(&self, other: &ModelConfig) -> Vec<(&'static str, f64, f64)> {
        let mut out = Vec::new();
        for (k, a, b) in [
            ("task_weight", self.task_weight, other.task_weight),
            ("angle_weight_slope_deg", self.angle_weight_slope_deg, other.angle_weight_slope_deg),
            ("angle_weight_cap", self.angle_weight_cap, other.angle_weight_cap),
        ] {
            if a.to_bits() != b.to_bits() {
                out.push((k, a, b));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[usize]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let conv = self
            .conv
            .iter()
            .map(|c| format!("{}x{}x{}", c.kernel, c.stride, c.channels))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(s, "kind = {}", self.kind.as_str());
        let _ = writeln!(s, "input_side = {}", self.input_side);
        let _ = writeln!(s, "conv = {conv}");
        let _ = writeln!(s, "fc = {}", list(&self.fc));
        let _ = writeln!(s, "lstm_hidden = {}", self.lstm_hidden);
        let _ = writeln!(s, "seq_len = {}", self.seq_len);
        let _ = writeln!(s, "speed_window = {}", self.speed_window);
        let _ = writeln!(s, "speed_encoder = {}", list(&self.speed_encoder));
        let _ = writeln!(s, "speed_norm_mps = {}", self.speed_norm_mps);
        let _ = writeln!(s, "steering_scale_deg = {}", self.steering_scale_deg);
        let _ = writeln!(s, "task_weight = {}", self.task_weight);
        let _ = writeln!(s, "angle_weight_slope_deg = {}", self.angle_weight_slope_deg);
        let _ = writeln!(s, "angle_weight_cap = {}", self.angle_weight_cap);
        s
    }

    /// Parses the `key = value` form written by [`ModelConfig::to_text`].
    /// Missing keys keep the desk defaults for the parsed kind.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            pairs.push((k.trim(), v.trim()));
        }
        let kind = pairs
            .iter()
            .find(|(k, _)| *k == "kind")
            .map(|(_, v)| v.parse())
            .transpose()?
            .ok_or_else(|| Error::Config("missing `kind`".into()))?;
        let mut cfg = ModelConfig::desk(kind);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kind" => self.kind = value.parse()?,
            "input_side" => self.input_side = parse_num(key, value)?,
            "conv" => self.conv = parse_conv(value)?,
            "fc" => self.fc = parse_list(key, value)?,
            "lstm_hidden" => self.lstm_hidden = parse_num(key, value)?,
            "seq_len" => self.seq_len = parse_num(key, value)?,
            "speed_window" => self.speed_window = parse_num(key, value)?,
            "speed_encoder" => self.speed_encoder = parse_list(key, value)?,
            "speed_norm_mps" => self.speed_norm_mps = parse_num(key, value)?,
            "steering_scale_deg" => self.steering_scale_deg = parse_num(key, value)?,
            "task_weight" => self.task_weight = parse_num(key, value)?,
            "angle_weight_slope_deg" => self.angle_weight_slope_deg = parse_num(key, value)?,
            "angle_weight_cap" => self.angle_weight_cap = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown model key `{other}`"))),
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 13] = [
        "kind",
        "input_side",
        "conv",
        "fc",
        "lstm_hidden",
        "seq_len",
        "speed_window",
        "speed_encoder",
        "speed_norm_mps",
        "steering_scale_deg",
        "task_weight",
        "angle_weight_slope_deg",
        "angle_weight_cap",
    ];
}

pub fn default_task_weight(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::BaseSteering => 0.0,
        ModelKind::SpeedCommand => 0.5,
        ModelKind::MultiModal => 1.0,
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn parse_conv(value: &str) -> Result<Vec<ConvSpec>> {
    value
        .split(',')
        .map(|layer| {
            let parts: Vec<&str> = layer.trim().split('x').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!("conv layer `{layer}`: expected KxSxC")));
            }
            Ok(ConvSpec {
                kernel: parse_num("conv", parts[0])?,
                stride: parse_num("conv", parts[1])?,
                channels: parse_num("conv", parts[2])?,
            })
        })
        .collect()
}
