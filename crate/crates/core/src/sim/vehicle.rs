use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleParams {
    pub wheelbase_m: f64,
    /// Steering-wheel degrees per road-wheel degree.
    pub steer_ratio: f64,
    pub a_max_mps2: f64,
    /// Mechanical road-wheel lock.
    pub max_wheel_deg: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams { wheelbase_m: 2.7, steer_ratio: 16.0, a_max_mps2: 2.0, max_wheel_deg: 35.0 }
    }
}

impl VehicleParams {
    /// Path curvature produced by a steering-wheel angle.
    pub fn curvature(&self, steering_deg: f64) -> f64 {
        let wheel = (steering_deg / self.steer_ratio).clamp(-self.max_wheel_deg, self.max_wheel_deg);
        libm::tan(wheel.to_radians()) / self.wheelbase_m
    }

    /// Steering-wheel angle that produces `curvature`.
    pub fn steering_for(&self, curvature: f64) -> f64 {
        libm::atan(curvature * self.wheelbase_m).to_degrees() * self.steer_ratio
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub time: f64,
}

impl SimState {
    /// Moves the vehicle sideways, positive to its left.
    pub fn shifted_left(&self, meters: f64) -> SimState {
        let (s, c) = libm::sincos(self.heading);
        SimState { x: self.x - s * meters, y: self.y + c * meters, ..*self }
    }
}

/// Kinematic bicycle step with exact integration along the constant-curvature arc.
pub fn step_vehicle(state: &SimState, steering_deg: f64, target_speed: f64, dt: f64, p: &VehicleParams) -> Result<SimState> {
    if !(dt > 0.0) || !steering_deg.is_finite() || !target_speed.is_finite() {
        return Err(Error::NonFinite("vehicle input"));
    }
    let dv = (target_speed.max(0.0) - state.speed).clamp(-p.a_max_mps2 * dt, p.a_max_mps2 * dt);
    let speed = (state.speed + dv).max(0.0);
    let dist = 0.5 * (state.speed + speed) * dt;
    let k = p.curvature(steering_deg);
    let h0 = state.heading;
    let h1 = h0 + k * dist;
    let (x, y) = if libm::fabs(k * dist) < 1e-12 {
        let (s, c) = libm::sincos(h0);
        (state.x + c * dist, state.y + s * dist)
    } else {
        let (s0, c0) = libm::sincos(h0);
        let (s1, c1) = libm::sincos(h1);
        (state.x + (s1 - s0) / k, state.y - (c1 - c0) / k)
    };
    let next = SimState { x, y, heading: h1, speed, time: state.time + dt };
    if !(next.x.is_finite() && next.y.is_finite() && next.heading.is_finite()) {
        return Err(Error::NonFinite("vehicle state"));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn start(speed: f64) -> SimState {
        SimState { x: 0.0, y: 0.0, heading: 0.0, speed, time: 0.0 }
    }

    #[test]
    fn straight_line_distance() {
        let p = VehicleParams::default();
        let mut s = start(12.5);
        for _ in 0..300 {
            s = step_vehicle(&s, 0.0, 12.5, 1.0 / 30.0, &p).unwrap();
        }
        assert_eq!(s.y, 0.0);
        assert!((s.x - 12.5 * 10.0).abs() / 125.0 < 1e-9);
    }

    #[test]
    fn constant_steer_closes_circle() {
        let p = VehicleParams::default();
        let steer = 80.0;
        let radius = p.wheelbase_m / (steer / p.steer_ratio).to_radians().tan();
        let v = 10.0;
        let dt = 1.0 / 30.0;
        let ticks = libm::round(2.0 * PI * radius / (v * dt)) as usize;
        let mut s = start(v);
        for _ in 0..ticks {
            s = step_vehicle(&s, steer, v, dt, &p).unwrap();
        }
        let closure = libm::hypot(s.x, s.y) / (2.0 * PI * radius);
        assert!(closure < 0.01, "{closure}");
    }

    #[test]
    fn acceleration_is_rate_limited() {
        let p = VehicleParams::default();
        let s = step_vehicle(&start(10.0), 0.0, 0.0, 1.0 / 30.0, &p).unwrap();
        assert!((s.speed - (10.0 - 2.0 / 30.0)).abs() < 1e-12);
        let s = step_vehicle(&start(10.0), 0.0, 10.01, 1.0 / 30.0, &p).unwrap();
        assert_eq!(s.speed, 10.01);
        assert!((p.steering_for(p.curvature(33.0)) - 33.0).abs() < 1e-9);
        assert!(step_vehicle(&start(1.0), f64::NAN, 1.0, 0.1, &p).is_err());
    }
}
