use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::data::Camera;
use crate::error::{Error, Result};

/// Lateral offset of each side camera from the center camera.
pub const SIDE_CAMERA_OFFSET_M: f64 = 0.508;
pub const RECOVERY_TIME_S: f64 = 1.0;
/// Below this speed the correction angle is degenerate and synthesis is skipped.
pub const MIN_SYNTHESIS_SPEED_MPS: f64 = 1.0;
pub const SPEED_NOISE_SIGMA_MPS: f64 = 0.2;
pub const SPEED_RECOVERY_SIGMA_MPS: f64 = 2.0;
/// From the newest window entry to the next-frame target: two frames at 30 fps.
pub const SPEED_TARGET_LEAD_S: f64 = 2.0 / 30.0;

/// Recovery angle in degrees that closes a lateral gap `d_y_m` within `t_r_s` at `speed_mps`.
pub fn recovery_angle_deg(speed_mps: f64, d_y_m: f64, t_r_s: f64) -> f64 {
    libm::atan(d_y_m / (speed_mps * t_r_s)).to_degrees()
}

/// Steering label for a side camera: a left-mounted camera sees the road as if
/// the car had drifted left, so its label turns right (more negative).
pub fn synthesize_side_label(theta_center_deg: f64, speed_mps: f64, camera: Camera, d_y_m: f64, t_r_s: f64) -> Result<f64> {
    if !(speed_mps >= MIN_SYNTHESIS_SPEED_MPS) {
        return Err(Error::SynthesisSkipped { speed: speed_mps });
    }
    if !(d_y_m >= 0.0) || !(t_r_s > 0.0) {
        return Err(Error::invalid("synthesize_side_label", format!("d_y {d_y_m} and t_r {t_r_s} must be positive")));
    }
    let delta = recovery_angle_deg(speed_mps, d_y_m, t_r_s);
    match camera {
        Camera::Right => Ok(theta_center_deg + delta),
        Camera::Left => Ok(theta_center_deg - delta),
        Camera::Center => Err(Error::invalid("synthesize_side_label", "center camera needs no synthesis")),
    }
}

/// Adds zero-mean Gaussian noise to each window entry, clamping at zero.
pub fn synthesize_speed_noise(window: &[f64], rng: &mut impl rand::Rng, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return window.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    window.iter().map(|&v| (v + normal.sample(rng)).max(0.0)).collect()
}

/// Speed counterpart of the side-camera labels: shifts the whole window by a
/// drawn offset, as if the car had drifted off the recorded speed, and moves
/// the target back toward the recording so the offset would close within
/// `t_r_s`. `lead_s` is the time from the newest window entry to the target.
pub fn synthesize_speed_recovery(
    window: &[f64],
    target_mps: f64,
    rng: &mut impl rand::Rng,
    sigma: f64,
    lead_s: f64,
    t_r_s: f64,
) -> (Vec<f64>, f64) {
    if sigma == 0.0 {
        return (window.to_vec(), target_mps);
    }
    let offset = Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
    let kept = (1.0 - lead_s / t_r_s).max(0.0);
    let shifted = window.iter().map(|&v| (v + offset).max(0.0)).collect();
    (shifted, (target_mps + offset * kept).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn reference_angle() {
        let r = synthesize_side_label(0.0, 10.0, Camera::Right, 0.508, 1.0).unwrap();
        let l = synthesize_side_label(0.0, 10.0, Camera::Left, 0.508, 1.0).unwrap();
        assert!((r - libm::atan(0.0508).to_degrees()).abs() < 1e-12);
        assert!((r - 2.908).abs() < 2e-4);
        assert_eq!(r, -l);
        let far = synthesize_side_label(3.0, 1e6, Camera::Right, 0.508, 1.0).unwrap();
        assert!((far - 3.0).abs() < 1e-4);
        assert!(matches!(
            synthesize_side_label(0.0, 0.5, Camera::Left, 0.508, 1.0),
            Err(Error::SynthesisSkipped { .. })
        ));
        assert!(synthesize_side_label(0.0, 5.0, Camera::Center, 0.508, 1.0).is_err());
    }

    #[test]
    fn noise_statistics() {
        let mut r = rng::seeded(1);
        let w = [10.0; 10];
        assert_eq!(synthesize_speed_noise(&w, &mut r, 0.0), w);
        let mut sum = 0.0;
        let n = 10_000;
        for _ in 0..n {
            sum += synthesize_speed_noise(&w, &mut r, 0.2).iter().map(|v| v - 10.0).sum::<f64>();
        }
        assert!((sum / (n * 10) as f64).abs() < 0.01);
        let low = synthesize_speed_noise(&[0.0; 10], &mut r, 0.2);
        assert!(low.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn speed_recovery_closes_the_offset() {
        let w = [10.0; 10];
        assert_eq!(synthesize_speed_recovery(&w, 10.5, &mut rng::seeded(1), 0.0, 0.1, 1.0), (w.to_vec(), 10.5));
        let mut r = rng::seeded(2);
        for _ in 0..200 {
            let (shifted, t) = synthesize_speed_recovery(&w, 10.0, &mut r, 2.0, 0.25, 1.0);
            let offset = shifted[0] - 10.0;
            assert!(shifted.iter().all(|&v| v == shifted[0]));
            assert!((t - (10.0 + 0.75 * offset)).abs() < 1e-12);
        }
        let (_, t) = synthesize_speed_recovery(&w, 10.0, &mut rng::seeded(3), 2.0, 2.0, 1.0);
        assert_eq!(t, 10.0);
    }
}
