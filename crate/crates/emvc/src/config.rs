//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use emvc_core::data::PrepConfig;
use emvc_core::models::{ModelConfig, ModelKind};
use emvc_core::sim::{DatasetConfig, EpisodeConfig, Oracle, Perturbation, RoadConfig};
use emvc_core::train::TrainConfig;

use crate::error::{CliError, Result};

/// Every accepted key with its default.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "1"),
    // datagen
    ("data_dir", "data"),
    ("trips", "10"),
    ("n_frames", "9000"),
    ("road.half_width_m", "1.75"),
    ("road.curved", "true"),
    ("oracle.v_max_mps", "15"),
    ("camera.d_y_m", "0.508"),
    // prep
    ("manifest", ""),
    ("shard_dir", "shards"),
    ("input_side", "48"),
    ("seq_len", "1"),
    ("seq_stride", "3"),
    ("tick_stride", "3"),
    ("side_synthesis", "true"),
    ("t_r_s", "1"),
    ("min_speed_mps", "4"),
    ("split_ratios", "0.8,0.1,0.1"),
    ("split_seed", "0"),
    // model and training
    ("model", "mmmt"),
    ("preset", "compact"),
    ("train_dir", "run"),
    ("steps", "2000"),
    ("batch_size", "32"),
    ("optimizer", "adam"),
    ("lr", "0.0001"),
    ("speed_noise_sigma", "0.2"),
    ("speed_recovery_sigma", "2"),
    ("augment", "true"),
    ("eval_every", "500"),
    ("resume", "false"),
    // eval
    ("checkpoint", ""),
    ("eval_dir", "eval"),
    ("eval_split", "test"),
    // drive
    ("drive_dir", "drive"),
    ("drive.road_seed", "1000"),
    ("drive.duration_s", "60"),
    ("drive.perturb", ""),
    ("drive.oracle", "false"),
    ("drive.v_max_mps", "30"),
    ("smoothing.alpha", "0.2"),
    ("smoothing.deadband_deg", "0.1"),
    // gradcheck
    ("gradcheck.tolerance", "0.001"),
    ("gradcheck.coords", "20"),
];

/// Keys under `model.` forward to the network configuration.
const MODEL_PREFIX: &str = "model.";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

fn is_known(key: &str) -> bool {
    DEFAULTS.iter().any(|(k, _)| *k == key)
        || key
            .strip_prefix(MODEL_PREFIX)
            .is_some_and(|k| k != "kind" && ModelConfig::KEYS.contains(&k))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Config(format!("`{key}`: expected true or false, got `{other}`"))),
        }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.get(key))
    }

    /// Canonical text: one `key = value` line per key, sorted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Canonical text preceded by a hash comment; parses back to the same config.
    pub fn echo(&self) -> String {
        format!("# config hash {}\n{}", self.hash(), self.to_text())
    }

    pub fn manifest_path(&self) -> PathBuf {
        match self.get("manifest") {
            "" => self.path("data_dir").join("manifest.csv"),
            p => PathBuf::from(p),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        match self.get("checkpoint") {
            "" => self.path("train_dir").join("model.emvc"),
            p => PathBuf::from(p),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let kind: ModelKind = self.get("model").parse()?;
        let mut cfg = match self.get("preset") {
            "desk" => ModelConfig::desk(kind),
            "compact" => ModelConfig::compact(kind),
            "toy" => ModelConfig::toy(kind),
            other => return Err(CliError::Config(format!("unknown preset `{other}` (desk, compact, toy)"))),
        };
        cfg.input_side = self.parse_value("input_side")?;
        if kind == ModelKind::SpeedCommand {
            cfg.seq_len = self.parse_value("seq_len")?;
        }
        for (k, v) in &self.values {
            if let Some(key) = k.strip_prefix(MODEL_PREFIX) {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig> {
        let road = RoadConfig {
            half_width_m: self.parse_value("road.half_width_m")?,
            curved: self.flag("road.curved")?,
            ..RoadConfig::default()
        };
        let oracle = Oracle { v_max_mps: self.parse_value("oracle.v_max_mps")?, ..Oracle::default() };
        Ok(DatasetConfig {
            seed: self.parse_value("seed")?,
            trips: self.parse_value("trips")?,
            n_frames: self.parse_value("n_frames")?,
            road,
            oracle,
            camera_offset_m: self.parse_value("camera.d_y_m")?,
            ..DatasetConfig::default()
        })
    }

    pub fn prep_config(&self) -> Result<PrepConfig> {
        let ratios: Vec<f64> = self
            .get("split_ratios")
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CliError::Config("`split_ratios`: expected three comma-separated numbers".into()))?;
        let split_ratios: [f64; 3] = ratios
            .try_into()
            .map_err(|_| CliError::Config("`split_ratios`: expected three comma-separated numbers".into()))?;
        Ok(PrepConfig {
            input_side: self.parse_value("input_side")?,
            seq_len: self.parse_value("seq_len")?,
            seq_stride: self.parse_value("seq_stride")?,
            tick_stride: self.parse_value("tick_stride")?,
            speed_window: self.model_config().map(|m| m.speed_window).unwrap_or(10),
            side_synthesis: self.flag("side_synthesis")?,
            d_y_m: self.parse_value("camera.d_y_m")?,
            t_r_s: self.parse_value("t_r_s")?,
            min_speed_mps: self.parse_value("min_speed_mps")?,
            split_ratios,
            split_seed: self.parse_value("split_seed")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        use emvc_core::optim::{OptimizerConfig, OptimizerKind};
        let kind = match self.get("optimizer") {
            "adam" => OptimizerKind::ADAM,
            "sgd" => OptimizerKind::Sgd,
            other => return Err(CliError::Config(format!("unknown optimizer `{other}` (adam, sgd)"))),
        };
        Ok(TrainConfig {
            steps: self.parse_value("steps")?,
            batch_size: self.parse_value("batch_size")?,
            optimizer: OptimizerConfig { kind, lr: self.parse_value("lr")?, ..OptimizerConfig::default() },
            seed: self.parse_value("seed")?,
            speed_noise_sigma: self.parse_value("speed_noise_sigma")?,
            speed_recovery_sigma: self.parse_value("speed_recovery_sigma")?,
            augment: self.flag("augment")?,
        })
    }

    pub fn perturbations(&self) -> Result<Vec<Perturbation>> {
        parse_perturbations(self.get("drive.perturb"))
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig> {
        Ok(EpisodeConfig {
            duration_s: self.parse_value("drive.duration_s")?,
            perturbations: self.perturbations()?,
            ..EpisodeConfig::default()
        })
    }
}

/// Parses `time:meters[,time:meters...]`.
pub fn parse_perturbations(text: &str) -> Result<Vec<Perturbation>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || CliError::Config(format!("perturbation `{part}` is not time_s:lateral_m"));
        let (t, m) = part.split_once(':').ok_or_else(bad)?;
        let time_s: f64 = t.trim().parse().map_err(|_| bad())?;
        let lateral_m: f64 = m.trim().parse().map_err(|_| bad())?;
        if !(time_s >= 0.0) || !lateral_m.is_finite() {
            return Err(bad());
        }
        out.push(Perturbation { time_s, lateral_m });
    }
    Ok(out)
}
