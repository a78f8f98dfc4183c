use crate::control::ControlOutput;
use crate::sim::road::{wrap_angle, Road};
use crate::sim::vehicle::{SimState, VehicleParams};

/// Ground-truth driver: curvature feed-forward plus lateral and heading
/// feedback, with a speed profile that slows for curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Oracle {
    pub vehicle: VehicleParams,
    pub v_max_mps: f64,
    pub a_lat_mps2: f64,
    pub a_accel_mps2: f64,
    pub a_brake_mps2: f64,
    pub preview_m: f64,
    /// Lateral gain, 1/m².
    pub k_lateral: f64,
    /// Heading gain, 1/m.
    pub k_heading: f64,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle {
            vehicle: VehicleParams::default(),
            v_max_mps: 15.0,
            a_lat_mps2: 2.0,
            a_accel_mps2: 1.0,
            a_brake_mps2: 1.0,
            preview_m: 200.0,
            k_lateral: 0.04,
            k_heading: 0.4,
        }
    }
}

impl Oracle {
    fn curve_speed(&self, curvature: f64) -> f64 {
        if curvature == 0.0 {
            self.v_max_mps
        } else {
            libm::sqrt(self.a_lat_mps2 / libm::fabs(curvature)).min(self.v_max_mps)
        }
    }

    /// Highest speed at arc length `s` from which every upcoming curve can
    /// still be entered at its curve speed with the braking limit.
    pub fn reference_speed(&self, road: &Road, s: f64) -> f64 {
        let mut v = self.curve_speed(road.curvature_at(s));
        for seg in road.segments() {
            let ahead = seg.s0 - s;
            if ahead <= 0.0 {
                continue;
            }
            if ahead > self.preview_m {
                break;
            }
            let vc = self.curve_speed(seg.curvature);
            v = v.min(libm::sqrt(vc * vc + 2.0 * self.a_brake_mps2 * ahead));
        }
        v
    }

    pub fn act(&self, road: &Road, state: &SimState, dt: f64) -> ControlOutput {
        let p = road.project(state.x, state.y);
        let heading_err = wrap_angle(state.heading - p.heading);
        let denom = 1.0 - p.curvature * p.lateral;
        let ff = if denom > 0.1 { p.curvature / denom } else { p.curvature };
        let k = ff - self.k_lateral * p.lateral - self.k_heading * libm::sin(heading_err);
        let steering_deg = self.vehicle.steering_for(k);
        let v_ref = self.reference_speed(road, p.s);
        let target_speed_mps = v_ref.min(state.speed + self.a_accel_mps2 * dt);
        ControlOutput { steering_deg, target_speed_mps, raw_steering_deg: steering_deg }
    }
}
