//! Minibatch training and offline evaluation.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::synth::{synthesize_speed_noise, synthesize_speed_recovery, RECOVERY_TIME_S, SPEED_TARGET_LEAD_S};
use crate::data::{Augmentation, Image, Record};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{composite_loss_nodes, read_prediction, Model, ModelInput, ModelKind, Prediction, Target};
use crate::optim::{Optimizer, OptimizerConfig, OptimizerState};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Standard deviation of the feedback-window noise; zero disables it.
    pub speed_noise_sigma: f64,
    /// Standard deviation of the whole-window speed offsets; zero disables them.
    pub speed_recovery_sigma: f64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            speed_noise_sigma: crate::data::synth::SPEED_NOISE_SIGMA_MPS,
            speed_recovery_sigma: crate::data::synth::SPEED_RECOVERY_SIGMA_MPS,
            augment: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub loss: f64,
    pub angle_loss: f64,
    pub second_loss: Option<f64>,
}

/// Network inputs for one record, owned so they can be borrowed as a [`ModelInput`].
pub struct PreparedInput {
    pub frames: Vec<Tensor>,
    pub window: Vec<f64>,
}

impl PreparedInput {
    pub fn input(&self, kind: ModelKind) -> ModelInput<'_> {
        match kind {
            ModelKind::BaseSteering => ModelInput::Frame(self.frames.last().expect("at least one frame")),
            ModelKind::SpeedCommand => ModelInput::Sequence(&self.frames),
            ModelKind::MultiModal => {
                ModelInput::FrameAndSpeeds(self.frames.last().expect("at least one frame"), &self.window)
            }
        }
    }
}

/// Builds the inputs a model of `model`'s kind needs from `record`.
pub fn prepare_input(model: &Model, record: &Record) -> Result<PreparedInput> {
    let cfg = model.config();
    let frames: &[crate::data::Frame] = match cfg.kind {
        ModelKind::SpeedCommand => {
            if record.frames.len() < cfg.seq_len {
                return Err(Error::invalid(
                    "record",
                    alloc::format!("{} frames but the model needs sequences of {}", record.frames.len(), cfg.seq_len),
                ));
            }
            &record.frames[record.frames.len() - cfg.seq_len..]
        }
        _ => core::slice::from_ref(record.current_frame()),
    };
    if let Some(f) = frames.iter().find(|f| f.side != cfg.input_side) {
        return Err(Error::shape("record", alloc::format!("frame side {} vs model input {}", f.side, cfg.input_side)));
    }
    if cfg.kind == ModelKind::MultiModal && record.window.len() != cfg.speed_window {
        return Err(Error::shape(
            "record",
            alloc::format!("window of {} speeds vs model window {}", record.window.len(), cfg.speed_window),
        ));
    }
    Ok(PreparedInput { frames: frames.iter().map(|f| f.to_tensor()).collect(), window: record.window.clone() })
}

pub fn target_of(record: &Record, steering_deg: f64) -> Target {
    Target { steering_deg, speed_mps: Some(record.next_speed_mps), command: Some(record.command) }
}

pub struct Trainer {
    pub model: Model,
    optimizer: Optimizer,
    config: TrainConfig,
    step: usize,
    order: Option<(usize, Vec<usize>)>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        Self::resume(model, config, OptimizerState::default(), 0)
    }

    /// Continues from a saved step and optimizer state; the batch order and
    /// augmentation draws depend only on the seed and step, so a resumed run
    /// repeats an unbroken one exactly.
    pub fn resume(model: Model, config: TrainConfig, state: OptimizerState, step: usize) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (name, v) in [("speed_noise_sigma", config.speed_noise_sigma), ("speed_recovery_sigma", config.speed_recovery_sigma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(alloc::format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let optimizer = Optimizer::with_state(config.optimizer, state);
        Ok(Trainer { model, optimizer, config, step, order: None })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn optimizer_state(&self) -> &OptimizerState {
        self.optimizer.state()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn sample_index(&mut self, position: usize, n: usize) -> usize {
        let epoch = position / n;
        if self.order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::stream(self.config.seed, &[0x6570_6f63_68, epoch as u64]));
            self.order = Some((epoch, perm));
        }
        self.order.as_ref().expect("filled").1[position % n]
    }

    /// One optimizer step on the next minibatch of `data`.
    pub fn train_step(&mut self, data: &[Record]) -> Result<StepStats> {
        if data.is_empty() {
            return Err(Error::EmptySequence);
        }
        let kind = self.model.kind();
        let mut g = Graph::new();
        let mut heads = Vec::with_capacity(self.config.batch_size);
        let mut targets = Vec::with_capacity(self.config.batch_size);
        for j in 0..self.config.batch_size {
            let idx = self.sample_index(self.step * self.config.batch_size + j, data.len());
            let record = &data[idx];
            let mut prepared = prepare_input(&self.model, record)?;
            let mut r = rng::stream(self.config.seed, &[self.step as u64, j as u64]);
            let mut steering = record.steering_deg;
            if self.config.augment {
                let aug = Augmentation::draw(&mut r);
                for f in prepared.frames.iter_mut() {
                    let (img, _) = aug.apply(&Image::from_tensor(f)?, 0.0);
                    *f = img.to_tensor();
                }
                steering = if aug.flip { -steering } else { steering };
            }
            let mut target = target_of(record, steering);
            if kind == ModelKind::MultiModal {
                let (window, speed) = synthesize_speed_recovery(
                    &prepared.window,
                    record.next_speed_mps,
                    &mut r,
                    self.config.speed_recovery_sigma,
                    SPEED_TARGET_LEAD_S,
                    RECOVERY_TIME_S,
                );
                prepared.window = synthesize_speed_noise(&window, &mut r, self.config.speed_noise_sigma);
                target.speed_mps = Some(speed);
            }
            heads.push(self.model.forward(&mut g, prepared.input(kind))?);
            targets.push(target);
        }
        let loss = composite_loss_nodes(&mut g, self.model.config(), &heads, &targets)?;
        self.model.params_mut().zero_grad();
        g.backward(loss.total, self.model.params_mut())?;
        self.optimizer.step(self.model.params_mut())?;
        let stats = StepStats {
            step: self.step,
            loss: g.value(loss.total).item(),
            angle_loss: g.value(loss.angle).item(),
            second_loss: loss.second.map(|id| g.value(id).item()),
        };
        self.step += 1;
        Ok(stats)
    }
}

/// Anything that maps a record to a prediction.
pub trait Predictor {
    fn predict(&mut self, record: &Record) -> Result<Prediction>;
}

impl Predictor for &Model {
    fn predict(&mut self, record: &Record) -> Result<Prediction> {
        let prepared = prepare_input(self, record)?;
        let mut g = Graph::new();
        let heads = self.forward(&mut g, prepared.input(self.kind()))?;
        Ok(read_prediction(&g, &heads))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub count: usize,
    pub discarded: usize,
    pub angle_mae_deg: f64,
    pub speed_mae_mps: Option<f64>,
    pub command_accuracy: Option<f64>,
    /// Rows are true classes, columns predicted, both in [`SpeedCommand::ALL`] order.
    pub confusion: Option<[[usize; 3]; 3]>,
}

/// Scores `predictor` on records at or above `min_speed_mps`.
pub fn evaluate(records: &[Record], predictor: &mut dyn Predictor, min_speed_mps: f64) -> Result<Metrics> {
    let mut m = Metrics::default();
    let (mut angle, mut speed, mut speed_n) = (0.0, 0.0, 0usize);
    let mut confusion = [[0usize; 3]; 3];
    let mut has_command = false;
    for r in records {
        if r.speed_mps < min_speed_mps {
            m.discarded += 1;
            continue;
        }
        let p = predictor.predict(r)?;
        m.count += 1;
        angle += libm::fabs(p.steering_deg - r.steering_deg);
        if let Some(v) = p.speed_mps {
            speed += libm::fabs(v - r.next_speed_mps);
            speed_n += 1;
        }
        if let Some(c) = p.command() {
            has_command = true;
            confusion[r.command.index()][c.index()] += 1;
        }
    }
    if m.count > 0 {
        m.angle_mae_deg = angle / m.count as f64;
    }
    if speed_n > 0 {
        m.speed_mae_mps = Some(speed / speed_n as f64);
    }
    if has_command {
        let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
        m.command_accuracy = Some(correct as f64 / m.count as f64);
        m.confusion = Some(confusion);
    }
    Ok(m)
}
