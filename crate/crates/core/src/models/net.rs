use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::data::SpeedCommand;
use crate::error::{Error, Result};
use crate::graph::{Graph, LstmNodes, NodeId};
use crate::models::config::{ModelConfig, ModelKind};
use crate::params::{ParamId, ParamStore};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Lstm {
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    conv: Vec<Dense>,
    /// Hidden FC layers applied to each frame before the head (or the LSTM).
    visual_fc: Vec<Dense>,
    steer: Dense,
    lstm: Option<Lstm>,
    shared: Option<Dense>,
    command: Option<Dense>,
    speed_enc: Vec<Dense>,
    speed_fc: Option<Dense>,
    speed: Option<Dense>,
    /// Linear path from the raw window to the speed output.
    speed_skip: Option<Dense>,
}

/// Network input for one sample.
#[derive(Clone, Copy, Debug)]
pub enum ModelInput<'a> {
    Frame(&'a Tensor),
    Sequence(&'a [Tensor]),
    FrameAndSpeeds(&'a Tensor, &'a [f64]),
}

/// Graph nodes holding each head's output for one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadNodes {
    /// Steering angle in degrees, shape `[1]`.
    pub steering: NodeId,
    /// Next-frame speed in m/s, shape `[1]`.
    pub speed: Option<NodeId>,
    /// Unnormalized scores over [`SpeedCommand::ALL`], shape `[3]`.
    pub command: Option<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub steering_deg: f64,
    pub speed_mps: Option<f64>,
    pub command_logits: Option<[f64; 3]>,
}

impl Prediction {
    pub fn command(&self) -> Option<SpeedCommand> {
        self.command_logits.as_ref().map(SpeedCommand::argmax)
    }

    pub fn command_probs(&self) -> Option<[f64; 3]> {
        self.command_logits.map(|z| {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e = z.map(|v| libm::exp(v - m));
            let s: f64 = e.iter().sum();
            e.map(|v| v / s)
        })
    }
}

/// One of the three steering networks with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Builds a model with freshly initialized, 32-bit-representable weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeroed(config)?;
        m.initialize(seed);
        Ok(m)
    }

    /// Builds a model whose parameters are all zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let dense = |params: &mut ParamStore, name: &str, n: usize, m: usize| -> Result<Dense> {
            Ok(Dense {
                w: params.add(format!("{name}.w"), Tensor::zeros(&[n, m]))?,
                b: params.add(format!("{name}.b"), Tensor::zeros(&[m]))?,
            })
        };

        let mut conv = Vec::new();
        let mut c_in = 3;
        for (i, c) in config.conv.iter().enumerate() {
            conv.push(Dense {
                w: params.add(format!("conv{i}.w"), Tensor::zeros(&[c.kernel, c.kernel, c_in, c.channels]))?,
                b: params.add(format!("conv{i}.b"), Tensor::zeros(&[c.channels]))?,
            });
            c_in = c.channels;
        }
        let features = config.conv_features()?;

        let fc_before_head = match config.kind {
            ModelKind::SpeedCommand => &config.fc[..config.fc.len() - 1],
            _ => &config.fc[..],
        };
        let mut visual_fc = Vec::new();
        let mut width = features;
        for (i, &w) in fc_before_head.iter().enumerate() {
            visual_fc.push(dense(&mut params, &format!("fc{i}"), width, w)?);
            width = w;
        }

        let mut layout = Layout {
            conv,
            visual_fc,
            steer: Dense { w: ParamId(0), b: ParamId(0) },
            lstm: None,
            shared: None,
            command: None,
            speed_enc: Vec::new(),
            speed_fc: None,
            speed: None,
            speed_skip: None,
        };

        match config.kind {
            ModelKind::BaseSteering => {
                layout.steer = dense(&mut params, "steer", width, 1)?;
            }
            ModelKind::SpeedCommand => {
                let u = config.lstm_hidden;
                layout.lstm = Some(Lstm {
                    w_x: params.add("lstm.w_x", Tensor::zeros(&[width, 4 * u]))?,
                    w_h: params.add("lstm.w_h", Tensor::zeros(&[u, 4 * u]))?,
                    b: params.add("lstm.b", Tensor::zeros(&[4 * u]))?,
                });
                let shared = *config.fc.last().expect("validated");
                layout.shared = Some(dense(&mut params, "shared", u, shared)?);
                layout.steer = dense(&mut params, "steer", shared, 1)?;
                layout.command = Some(dense(&mut params, "command", shared, 3)?);
            }
            ModelKind::MultiModal => {
                layout.steer = dense(&mut params, "steer", width, 1)?;
                let mut w_in = config.speed_window;
                for (i, &w) in config.speed_encoder.iter().enumerate() {
                    layout.speed_enc.push(dense(&mut params, &format!("speed_enc{i}"), w_in, w)?);
                    w_in = w;
                }
                let joint = width + w_in;
                layout.speed_fc = Some(dense(&mut params, "speed_fc", joint, width)?);
                layout.speed = Some(dense(&mut params, "speed", width, 1)?);
                layout.speed_skip = Some(dense(&mut params, "speed_skip", config.speed_window, 1)?);
            }
        }
        Ok(Model { config, params, layout })
    }

    fn initialize(&mut self, seed: u64) {
        let lstm_ids = self.layout.lstm.map(|l| (l.w_x, l.w_h, l.b));
        let heads = [Some(self.layout.steer), self.layout.command, self.layout.speed];
        for id in self.params.ids().collect::<Vec<_>>() {
            let mut r = rng::stream(seed, &[id.index() as u64]);
            let is_head = heads.iter().flatten().any(|d| d.w == id);
            let t = self.params.get_mut(id);
            let dims = t.dims().to_vec();
            let is_bias = dims.len() == 1;
            if let Some((w_x, w_h, b)) = lstm_ids {
                if id == w_x || id == w_h {
                    let u = self.config.lstm_hidden as f64;
                    let a = 1.0 / libm::sqrt(u);
                    t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-a..a));
                    continue;
                }
                if id == b {
                    // forget gate starts open
                    let u = self.config.lstm_hidden;
                    t.data_mut()[u..2 * u].fill(1.0);
                    continue;
                }
            }
            if is_bias {
                continue;
            }
            if self.layout.speed_skip.is_some_and(|d| d.w == id) {
                // starts as "keep the latest speed"
                *t.data_mut().last_mut().expect("non-empty window") = 1.0;
                continue;
            }
            let fan_in: usize = dims[..dims.len() - 1].iter().product();
            let fan_out = dims[dims.len() - 1];
            let a = if is_head {
                libm::sqrt(6.0 / (fan_in + fan_out) as f64)
            } else {
                libm::sqrt(6.0 / fan_in as f64)
            };
            t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-a..a));
        }
        self.params.round_to_f32();
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces loss-only settings (task weight, angle weighting) in place.
    pub(crate) fn set_config_unchecked(&mut self, config: ModelConfig) {
        self.config = config;
    }

    /// Names of parameters that only the speed branch reads.
    pub fn speed_branch_params(&self) -> Vec<ParamId> {
        let mut out = Vec::new();
        let tail = self.layout.speed_fc.iter().chain(self.layout.speed.iter()).chain(self.layout.speed_skip.iter());
        for d in self.layout.speed_enc.iter().chain(tail) {
            out.push(d.w);
            out.push(d.b);
        }
        out
    }

    pub fn steering_head_params(&self) -> [ParamId; 2] {
        [self.layout.steer.w, self.layout.steer.b]
    }

    fn check_frame(&self, frame: &Tensor) -> Result<()> {
        let s = self.config.input_side;
        if frame.dims() != [s, s, 3] {
            return Err(Error::shape(
                "model input",
                format!("frame dims {:?} vs expected [{s}, {s}, 3]", frame.dims()),
            ));
        }
        Ok(())
    }

    fn dense(&self, g: &mut Graph, x: NodeId, d: Dense, relu: bool) -> Result<NodeId> {
        let w = g.param(&self.params, d.w);
        let b = g.param(&self.params, d.b);
        let y = g.affine(x, w, b)?;
        if relu {
            g.relu(y)
        } else {
            Ok(y)
        }
    }

    /// Convolution stack plus the hidden FC layers preceding the head (or LSTM).
    fn visual_features(&self, g: &mut Graph, frame: &Tensor) -> Result<NodeId> {
        self.check_frame(frame)?;
        let mut x = g.input(frame.clone());
        for (d, spec) in self.layout.conv.iter().zip(&self.config.conv) {
            let w = g.param(&self.params, d.w);
            let b = g.param(&self.params, d.b);
            let y = g.conv2d(x, w, b, spec.stride)?;
            x = g.relu(y)?;
        }
        x = g.flatten(x)?;
        for &d in &self.layout.visual_fc {
            x = self.dense(g, x, d, true)?;
        }
        Ok(x)
    }

    fn steering_head(&self, g: &mut Graph, features: NodeId) -> Result<NodeId> {
        let raw = self.dense(g, features, self.layout.steer, false)?;
        g.scale(raw, self.config.steering_scale_deg)
    }

    /// Records the forward pass for one sample and returns the head nodes.
    pub fn forward(&self, g: &mut Graph, input: ModelInput<'_>) -> Result<HeadNodes> {
        match (self.config.kind, input) {
            (ModelKind::BaseSteering, ModelInput::Frame(frame)) => {
                let v = self.visual_features(g, frame)?;
                Ok(HeadNodes { steering: self.steering_head(g, v)?, speed: None, command: None })
            }
            (ModelKind::SpeedCommand, ModelInput::Sequence(frames)) => self.command_forward(g, frames),
            (ModelKind::SpeedCommand, ModelInput::Frame(frame)) => {
                self.command_forward(g, core::slice::from_ref(frame))
            }
            (ModelKind::MultiModal, ModelInput::FrameAndSpeeds(frame, speeds)) => {
                self.multimodal_forward(g, frame, speeds)
            }
            (kind, _) => Err(Error::invalid(
                "model input",
                format!("input variant does not match model kind `{}`", kind.as_str()),
            )),
        }
    }

    fn command_forward(&self, g: &mut Graph, frames: &[Tensor]) -> Result<HeadNodes> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        if frames.iter().any(|f| f.dims() != first.dims()) {
            return Err(Error::shape("command net", "frames in a sequence differ in shape"));
        }
        let lstm = self.layout.lstm.expect("command layout");
        let p = LstmNodes {
            w_x: g.param(&self.params, lstm.w_x),
            w_h: g.param(&self.params, lstm.w_h),
            bias: g.param(&self.params, lstm.b),
        };
        let u = self.config.lstm_hidden;
        let mut h = g.input(Tensor::zeros(&[u]));
        let mut c = g.input(Tensor::zeros(&[u]));
        for frame in frames {
            let v = self.visual_features(g, frame)?;
            (h, c) = g.lstm_step(v, h, c, p)?;
        }
        let shared = self.dense(g, h, self.layout.shared.expect("command layout"), true)?;
        let steering = self.steering_head(g, shared)?;
        let command = self.dense(g, shared, self.layout.command.expect("command layout"), false)?;
        Ok(HeadNodes { steering, speed: None, command: Some(command) })
    }

    fn multimodal_forward(&self, g: &mut Graph, frame: &Tensor, speeds: &[f64]) -> Result<HeadNodes> {
        if speeds.len() != self.config.speed_window {
            return Err(Error::shape(
                "mmmt",
                format!("speed window length {} vs expected {}", speeds.len(), self.config.speed_window),
            ));
        }
        if let Some(s) = speeds.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid("mmmt", format!("feedback speed {s} must be finite and >= 0")));
        }
        let visual = self.visual_features(g, frame)?;
        let steering = self.steering_head(g, visual)?;

        let norm = self.config.speed_norm_mps;
        let window = g.input(Tensor::vector(speeds.iter().map(|v| v / norm).collect()));
        let mut s = window;
        for &d in &self.layout.speed_enc {
            s = self.dense(g, s, d, true)?;
        }
        let joint = g.concat(&[visual, s])?;
        let hidden = self.dense(g, joint, self.layout.speed_fc.expect("mmmt layout"), true)?;
        let raw = self.dense(g, hidden, self.layout.speed.expect("mmmt layout"), false)?;
        let skip = self.dense(g, window, self.layout.speed_skip.expect("mmmt layout"), false)?;
        let sum = g.add(raw, skip)?;
        let speed = g.scale(sum, norm)?;
        Ok(HeadNodes { steering, speed: Some(speed), command: None })
    }

    pub fn predict(&self, input: ModelInput<'_>) -> Result<Prediction> {
        let mut g = Graph::new();
        let heads = self.forward(&mut g, input)?;
        Ok(read_prediction(&g, &heads))
    }

    pub fn base_steering_forward(&self, image: &Tensor) -> Result<f64> {
        Ok(self.predict(ModelInput::Frame(image))?.steering_deg)
    }

    pub fn command_net_forward(&self, frames: &[Tensor]) -> Result<(f64, [f64; 3])> {
        let p = self.predict(ModelInput::Sequence(frames))?;
        Ok((p.steering_deg, p.command_logits.unwrap_or([0.0; 3])))
    }

    pub fn mmmt_forward(&self, image: &Tensor, speed_window: &[f64]) -> Result<(f64, f64)> {
        let p = self.predict(ModelInput::FrameAndSpeeds(image, speed_window))?;
        Ok((p.steering_deg, p.speed_mps.unwrap_or(0.0)))
    }
}

pub fn read_prediction(g: &Graph, heads: &HeadNodes) -> Prediction {
    Prediction {
        steering_deg: g.value(heads.steering).item(),
        speed_mps: heads.speed.map(|id| g.value(id).item()),
        command_logits: heads.command.map(|id| {
            let d = g.value(id).data();
            [d[0], d[1], d[2]]
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn image(seed: u64, side: usize) -> Tensor {
        let mut r = rng::seeded(seed);
        Tensor::new(&[side, side, 3], (0..side * side * 3).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_final_layer_gives_zero_output() {
        let mut m = Model::new(ModelConfig::toy(ModelKind::BaseSteering), 1).unwrap();
        for id in m.steering_head_params() {
            m.params_mut().get_mut(id).data_mut().fill(0.0);
        }
        for s in 0..5 {
            assert_eq!(m.base_steering_forward(&image(s, 16)).unwrap(), 0.0);
        }
    }

    #[test]
    fn deterministic_forward() {
        let a = Model::new(ModelConfig::toy(ModelKind::BaseSteering), 7).unwrap();
        let b = Model::new(ModelConfig::toy(ModelKind::BaseSteering), 7).unwrap();
        let img = image(3, 16);
        assert_eq!(
            a.base_steering_forward(&img).unwrap().to_bits(),
            b.base_steering_forward(&img).unwrap().to_bits()
        );
    }

    #[test]
    fn wrong_input_shape() {
        let m = Model::new(ModelConfig::toy(ModelKind::BaseSteering), 1).unwrap();
        assert!(matches!(m.base_steering_forward(&image(0, 17)), Err(Error::Shape { .. })));
        let m = Model::new(ModelConfig::toy(ModelKind::MultiModal), 1).unwrap();
        assert!(m.mmmt_forward(&image(0, 16), &[10.0; 9]).is_err());
        let m = Model::new(ModelConfig::toy(ModelKind::SpeedCommand), 1).unwrap();
        assert!(matches!(m.command_net_forward(&[]), Err(Error::EmptySequence)));
    }

    #[test]
    fn single_frame_sequence_is_one_lstm_step() {
        let m = Model::new(ModelConfig::toy(ModelKind::SpeedCommand), 2).unwrap();
        let img = image(1, 16);
        let mut g = Graph::new();
        m.forward(&mut g, ModelInput::Sequence(core::slice::from_ref(&img))).unwrap();
        assert_eq!(g.ops().filter(|k| *k == crate::OpKind::LstmStep).count(), 1);
        let (s1, z1) = m.command_net_forward(core::slice::from_ref(&img)).unwrap();
        let p = m.predict(ModelInput::Frame(&img)).unwrap();
        assert_eq!(s1, p.steering_deg);
        assert_eq!(z1, p.command_logits.unwrap());
        let probs = p.command_probs().unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steering_ignores_speed_branch() {
        let mut m = Model::new(ModelConfig::toy(ModelKind::MultiModal), 4).unwrap();
        let img = image(9, 16);
        let (s_a, v_a) = m.mmmt_forward(&img, &[10.0; 10]).unwrap();
        let mut w = vec![10.0; 10];
        w[3] = 14.0;
        let (s_b, v_b) = m.mmmt_forward(&img, &w).unwrap();
        assert_eq!(s_a.to_bits(), s_b.to_bits());
        assert_ne!(v_a, v_b);
        for id in m.speed_branch_params() {
            m.params_mut().get_mut(id).data_mut().fill(0.0);
        }
        let (s_c, _) = m.mmmt_forward(&img, &[3.0; 10]).unwrap();
        assert_eq!(s_a.to_bits(), s_c.to_bits());
    }

    #[test]
    fn initial_weights_are_f32_exact() {
        let m = Model::new(ModelConfig::toy(ModelKind::SpeedCommand), 5).unwrap();
        for p in m.params().iter() {
            assert!(p.value.data().iter().all(|&v| v as f32 as f64 == v), "{}", p.name);
        }
    }
}
