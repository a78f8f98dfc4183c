//! Steering smoothing, command set-points and the closed-loop controller step.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use crate::data::SpeedCommand;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::Tensor;

pub const SMOOTHING_ALPHA: f64 = 0.2;
pub const DEADBAND_DEG: f64 = 0.1;
pub const COMMAND_STEP_MPS: f64 = 1.0;
pub const V_MAX_MPS: f64 = 30.0;

/// Exponential smoothing of the steering output with a hold deadband.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoother {
    alpha: f64,
    deadband_deg: f64,
    last: Option<f64>,
}

impl Default for Smoother {
    fn default() -> Self {
        Smoother { alpha: SMOOTHING_ALPHA, deadband_deg: DEADBAND_DEG, last: None }
    }
}

impl Smoother {
    pub fn new(alpha: f64, deadband_deg: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(deadband_deg >= 0.0) || !deadband_deg.is_finite() {
            return Err(Error::invalid(
                "smoother",
                format!("alpha {alpha} must lie in (0, 1] and deadband {deadband_deg} must be >= 0"),
            ));
        }
        Ok(Smoother { alpha, deadband_deg, last: None })
    }

    /// Smoother that returns its input unchanged.
    pub fn identity() -> Self {
        Smoother { alpha: 1.0, deadband_deg: 0.0, last: None }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn deadband_deg(&self) -> f64 {
        self.deadband_deg
    }

    pub fn last_output(&self) -> Option<f64> {
        self.last
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    pub fn smooth(&mut self, theta_deg: f64) -> Result<f64> {
        if !theta_deg.is_finite() {
            return Err(Error::NonFinite("smoother input"));
        }
        let out = match self.last {
            None => theta_deg,
            Some(prev) if libm::fabs(theta_deg - prev) < self.deadband_deg => prev,
            Some(prev) => self.alpha * theta_deg + (1.0 - self.alpha) * prev,
        };
        self.last = Some(out);
        Ok(out)
    }
}

/// Smooths a whole sequence with a fresh smoother.
pub fn smooth_sequence(alpha: f64, deadband_deg: f64, input: &[f64]) -> Result<Vec<f64>> {
    let mut s = Smoother::new(alpha, deadband_deg)?;
    input.iter().map(|&v| s.smooth(v)).collect()
}

pub fn command_to_setpoint(command: SpeedCommand, current_speed_mps: f64) -> f64 {
    match command {
        SpeedCommand::Accelerate => current_speed_mps + COMMAND_STEP_MPS,
        SpeedCommand::Decelerate => (current_speed_mps - COMMAND_STEP_MPS).max(0.0),
        SpeedCommand::Maintain => current_speed_mps,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutput {
    pub steering_deg: f64,
    pub target_speed_mps: f64,
    /// Unsmoothed network steering.
    pub raw_steering_deg: f64,
}

/// Rolling history of speeds fed back into the multi-modal model, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackWindow {
    speeds: VecDeque<f64>,
}

impl FeedbackWindow {
    pub fn new(initial: &[f64]) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::EmptySequence);
        }
        if initial.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("feedback window", "speeds must be finite and >= 0"));
        }
        Ok(FeedbackWindow { speeds: initial.iter().copied().collect() })
    }

    pub fn constant(len: usize, speed_mps: f64) -> Result<Self> {
        Self::new(&alloc::vec![speed_mps; len])
    }

    pub fn push(&mut self, speed_mps: f64) {
        self.speeds.pop_front();
        self.speeds.push_back(speed_mps);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.speeds.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }
}

/// One control tick: run the multi-modal model, smooth its steering and clamp
/// its speed to `[0, v_max]`. The window then receives the measured speed of
/// this tick, so on the next tick it again ends one sample before the present,
/// as it did in training.
pub fn controller_step(
    model: &Model,
    frame: &Tensor,
    window: &mut FeedbackWindow,
    smoother: &mut Smoother,
    v_max_mps: f64,
    measured_speed_mps: f64,
) -> Result<ControlOutput> {
    if !(measured_speed_mps >= 0.0) || !measured_speed_mps.is_finite() {
        return Err(Error::invalid("controller_step", "measured speed must be finite and >= 0"));
    }
    let (raw, speed) = model.mmmt_forward(frame, &window.to_vec())?;
    if !raw.is_finite() || !speed.is_finite() {
        return Err(Error::NonFinite("model output"));
    }
    let steering_deg = smoother.smooth(raw)?;
    let target_speed_mps = speed.clamp(0.0, v_max_mps);
    window.push(measured_speed_mps);
    Ok(ControlOutput { steering_deg, target_speed_mps, raw_steering_deg: raw })
}
