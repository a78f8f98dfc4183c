use alloc::format;
use alloc::vec::Vec;

use crate::data::SpeedCommand;
use crate::error::{Error, Result};

pub const ACCEL_THRESHOLD_MPS2: f64 = 0.25;
pub const COMMAND_INTERVAL_S: f64 = 1.0;
/// Largest tolerated distance between a wanted time and the nearest recorded one.
pub const MAX_ALIGN_GAP_S: f64 = 0.1;

/// Command for the acceleration between two speeds `interval_s` apart.
/// Accelerations exactly at a threshold are `Maintain`.
pub fn label_speed_command(speed_s: f64, speed_e: f64, interval_s: f64) -> Result<SpeedCommand> {
    if !(interval_s > 0.0) {
        return Err(Error::invalid("label_speed_command", format!("interval {interval_s} must be positive")));
    }
    let acce = (speed_e - speed_s) / interval_s;
    Ok(if acce > ACCEL_THRESHOLD_MPS2 {
        SpeedCommand::Accelerate
    } else if acce < -ACCEL_THRESHOLD_MPS2 {
        SpeedCommand::Decelerate
    } else {
        SpeedCommand::Maintain
    })
}

/// Index of the timestamp nearest `t` in strictly increasing `times`; ties go to the earlier one.
pub fn nearest_index(times: &[f64], t: f64) -> Option<usize> {
    if times.is_empty() {
        return None;
    }
    let hi = times.partition_point(|&x| x < t);
    if hi == 0 {
        return Some(0);
    }
    if hi == times.len() {
        return Some(hi - 1);
    }
    if t - times[hi - 1] <= times[hi] - t {
        Some(hi - 1)
    } else {
        Some(hi)
    }
}

/// Labels every sample of one stream by comparing its speed with the speed
/// `interval_s` later. Samples whose end time has no recorded frame within
/// `max_gap_s` get `None`.
pub fn label_stream(times: &[f64], speeds: &[f64], interval_s: f64, max_gap_s: f64) -> Result<Vec<Option<SpeedCommand>>> {
    if times.len() != speeds.len() {
        return Err(Error::shape("label_stream", format!("{} times vs {} speeds", times.len(), speeds.len())));
    }
    let mut out = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let want = t + interval_s;
        let j = nearest_index(times, want).expect("non-empty");
        if libm::fabs(times[j] - want) > max_gap_s {
            out.push(None);
        } else {
            out.push(Some(label_speed_command(speeds[i], speeds[j], interval_s)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(label_speed_command(10.0, 10.5, 1.0).unwrap(), SpeedCommand::Accelerate);
        assert_eq!(label_speed_command(10.0, 10.0, 1.0).unwrap(), SpeedCommand::Maintain);
        assert_eq!(label_speed_command(10.0, 10.25, 1.0).unwrap(), SpeedCommand::Maintain);
        assert_eq!(label_speed_command(10.0, 9.75, 1.0).unwrap(), SpeedCommand::Maintain);
        assert_eq!(label_speed_command(10.0, 9.5, 1.0).unwrap(), SpeedCommand::Decelerate);
        assert!(label_speed_command(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn nearest_ties_and_edges() {
        let t = [0.0, 1.0, 2.0];
        assert_eq!(nearest_index(&t, 0.5), Some(0));
        assert_eq!(nearest_index(&t, 0.51), Some(1));
        assert_eq!(nearest_index(&t, -3.0), Some(0));
        assert_eq!(nearest_index(&t, 9.0), Some(2));
        assert_eq!(nearest_index(&[], 1.0), None);
    }

    #[test]
    fn stream_tail_is_unlabeled() {
        let times: Vec<f64> = (0..60).map(|i| i as f64 / 30.0).collect();
        let speeds: Vec<f64> = (0..60).map(|i| 10.0 + i as f64 * 0.02).collect();
        let labels = label_stream(&times, &speeds, 1.0, MAX_ALIGN_GAP_S).unwrap();
        assert_eq!(labels[0], Some(SpeedCommand::Accelerate));
        assert!(labels[59].is_none());
        // the last frame is at 59/30 s, so end times up to 62/30 s are within the gap
        assert!(labels[32].is_some());
        assert!(labels[33].is_none());
    }
}
