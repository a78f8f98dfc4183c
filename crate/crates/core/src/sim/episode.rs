use alloc::vec::Vec;

use crate::control::{controller_step, ControlOutput, FeedbackWindow, Smoother};
use crate::data::{preprocess_image, Image};
use crate::error::{Error, Result};
use crate::models::{Model, ModelKind};
use crate::sim::oracle::Oracle;
use crate::sim::render::Renderer;
use crate::sim::road::{wrap_angle, Road};
use crate::sim::vehicle::{step_vehicle, SimState, VehicleParams};
use crate::tensor::Tensor;

pub const DT_S: f64 = 1.0 / 30.0;

/// Anything that turns the current world state into a control set-point.
pub trait Driver {
    fn reset(&mut self, road: &Road, state: &SimState) -> Result<()>;
    fn act(&mut self, road: &Road, state: &SimState) -> Result<ControlOutput>;
}

pub struct OracleDriver {
    pub oracle: Oracle,
    pub dt: f64,
}

impl Driver for OracleDriver {
    fn reset(&mut self, _: &Road, _: &SimState) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, road: &Road, state: &SimState) -> Result<ControlOutput> {
        Ok(self.oracle.act(road, state, self.dt))
    }
}

/// Network preprocessing applied to a raw camera frame, identical to the
/// offline path: 8-bit quantization (as if written to disk), squeeze, HSV,
/// 8-bit frame codes.
pub fn preprocess(raw: &Image, side: usize) -> Result<Tensor> {
    let q = Image::from_rgb8(raw.height(), raw.width(), &raw.to_rgb8())?;
    Ok(preprocess_image(&q, side)?.to_tensor())
}

/// Closed-loop multi-modal network driver.
pub struct ModelDriver<'a> {
    pub model: &'a Model,
    pub renderer: &'a Renderer,
    pub smoother: Smoother,
    pub v_max_mps: f64,
    window: Option<FeedbackWindow>,
}

impl<'a> ModelDriver<'a> {
    pub fn new(model: &'a Model, renderer: &'a Renderer, smoother: Smoother, v_max_mps: f64) -> Result<Self> {
        if model.kind() != ModelKind::MultiModal {
            return Err(Error::invalid("model driver", "closed-loop driving needs the multi-modal model"));
        }
        Ok(ModelDriver { model, renderer, smoother, v_max_mps, window: None })
    }
}

impl Driver for ModelDriver<'_> {
    fn reset(&mut self, _: &Road, state: &SimState) -> Result<()> {
        self.smoother.reset();
        self.window = Some(FeedbackWindow::constant(self.model.config().speed_window, state.speed)?);
        Ok(())
    }

    fn act(&mut self, road: &Road, state: &SimState) -> Result<ControlOutput> {
        let frame = preprocess(&self.renderer.render(road, state, 0.0), self.model.config().input_side)?;
        let window = self.window.as_mut().ok_or_else(|| Error::invalid("model driver", "act before reset"))?;
        controller_step(self.model, &frame, window, &mut self.smoother, self.v_max_mps, state.speed)
    }
}

/// Instantaneous sideways displacement of the vehicle, positive to its left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub time_s: f64,
    pub lateral_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeConfig {
    pub duration_s: f64,
    pub dt_s: f64,
    pub start_s: f64,
    /// Initial speed; `None` starts at the oracle reference speed.
    pub start_speed_mps: Option<f64>,
    pub perturbations: Vec<Perturbation>,
    /// The episode ends early once |cte| exceeds this many lane half-widths.
    pub abort_half_widths: f64,
    pub vehicle: VehicleParams,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            duration_s: 60.0,
            dt_s: DT_S,
            start_s: 5.0,
            start_speed_mps: None,
            perturbations: Vec::new(),
            abort_half_widths: 3.0,
            vehicle: VehicleParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tick {
    pub t: f64,
    pub cte: f64,
    pub heading_err: f64,
    pub speed: f64,
    pub steering: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeReport {
    pub ticks: Vec<Tick>,
    pub half_width_m: f64,
    pub max_abs_cte: f64,
    pub mean_abs_cte: f64,
    pub off_road: bool,
    /// Time of the first tick beyond the lane half-width.
    pub off_road_at_s: Option<f64>,
}

impl EpisodeReport {
    pub fn from_ticks(ticks: Vec<Tick>, half_width_m: f64) -> Self {
        let max_abs_cte = ticks.iter().map(|t| libm::fabs(t.cte)).fold(0.0, f64::max);
        let mean_abs_cte = if ticks.is_empty() {
            0.0
        } else {
            ticks.iter().map(|t| libm::fabs(t.cte)).sum::<f64>() / ticks.len() as f64
        };
        let off_road_at_s = ticks.iter().find(|t| libm::fabs(t.cte) > half_width_m).map(|t| t.t);
        EpisodeReport { ticks, half_width_m, max_abs_cte, mean_abs_cte, off_road: max_abs_cte > half_width_m, off_road_at_s }
    }
}

pub fn start_state(road: &Road, cfg: &EpisodeConfig) -> SimState {
    let p = road.pose_at(cfg.start_s);
    let speed = cfg.start_speed_mps.unwrap_or_else(|| Oracle::default().reference_speed(road, cfg.start_s));
    SimState { x: p.x, y: p.y, heading: p.heading, speed, time: 0.0 }
}

/// Closed loop: observe, act, integrate. Runs until `duration_s`, the road
/// end, or an abort-level excursion.
pub fn run_episode(road: &Road, driver: &mut dyn Driver, cfg: &EpisodeConfig) -> Result<EpisodeReport> {
    if !(cfg.dt_s > 0.0) {
        return Err(Error::invalid("run_episode", "dt must be positive"));
    }
    let mut state = start_state(road, cfg);
    driver.reset(road, &state)?;
    let n = libm::round(cfg.duration_s / cfg.dt_s) as usize;
    let kicks: Vec<(usize, f64)> =
        cfg.perturbations.iter().map(|p| (libm::round(p.time_s / cfg.dt_s) as usize, p.lateral_m)).collect();
    let mut ticks = Vec::with_capacity(n);
    for k in 0..n {
        for &(at, dy) in &kicks {
            if at == k {
                state = state.shifted_left(dy);
            }
        }
        let proj = road.project(state.x, state.y);
        let out = driver.act(road, &state)?;
        ticks.push(Tick {
            t: k as f64 * cfg.dt_s,
            cte: proj.lateral,
            heading_err: wrap_angle(state.heading - proj.heading),
            speed: state.speed,
            steering: out.steering_deg,
        });
        if libm::fabs(proj.lateral) > cfg.abort_half_widths * road.half_width_m() || proj.s >= road.length() - 1.0 {
            break;
        }
        state = step_vehicle(&state, out.steering_deg, out.target_speed_mps, cfg.dt_s, &cfg.vehicle)?;
        state.time = (k + 1) as f64 * cfg.dt_s;
    }
    Ok(EpisodeReport::from_ticks(ticks, road.half_width_m()))
}
