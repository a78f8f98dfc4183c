use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Camera {
    Center,
    Left,
    Right,
}

impl Camera {
    pub const ALL: [Camera; 3] = [Camera::Center, Camera::Left, Camera::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Camera::Center => "Center",
            Camera::Left => "Left",
            Camera::Right => "Right",
        }
    }

    /// Lateral mounting offset in meters, positive to the right of the vehicle axis.
    pub fn offset_m(self, d_y: f64) -> f64 {
        match self {
            Camera::Center => 0.0,
            Camera::Left => -d_y,
            Camera::Right => d_y,
        }
    }
}

impl fmt::Display for Camera {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Camera {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Center" | "center" => Ok(Camera::Center),
            "Left" | "left" => Ok(Camera::Left),
            "Right" | "right" => Ok(Camera::Right),
            other => Err(Error::invalid("camera", format!("`{other}` is not one of Center, Left, Right"))),
        }
    }
}

/// One recorded frame with its control state.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivingSample {
    pub timestamp_s: f64,
    pub trip_id: String,
    pub camera: Camera,
    pub image_ref: String,
    /// Steering-wheel angle, positive to the left.
    pub steering_deg: f64,
    pub speed_mps: f64,
}

pub const MANIFEST_HEADER: [&str; 6] = ["timestamp_s", "trip_id", "camera", "image_path", "steering_deg", "speed_mps"];

impl DrivingSample {
    /// Parses one manifest row; `line` is only used in error messages.
    pub fn from_fields(fields: &[&str], line: usize) -> Result<Self> {
        let err = |detail: String| Error::Record { line, detail };
        if fields.len() != MANIFEST_HEADER.len() {
            return Err(err(format!("expected {} fields, found {}", MANIFEST_HEADER.len(), fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = fields[i]
                .trim()
                .parse()
                .map_err(|_| err(format!("{}: cannot parse `{}`", MANIFEST_HEADER[i], fields[i])))?;
            if !v.is_finite() {
                return Err(err(format!("{}: non-finite value", MANIFEST_HEADER[i])));
            }
            Ok(v)
        };
        let trip_id = fields[1].trim();
        if trip_id.is_empty() {
            return Err(err("empty trip_id".into()));
        }
        let camera = fields[2].trim().parse().map_err(|e: Error| err(format!("{e}")))?;
        let speed_mps = num(5)?;
        if speed_mps < 0.0 {
            return Err(err(format!("negative speed {speed_mps}")));
        }
        Ok(DrivingSample {
            timestamp_s: num(0)?,
            trip_id: trip_id.into(),
            camera,
            image_ref: fields[3].trim().into(),
            steering_deg: num(4)?,
            speed_mps,
        })
    }

    pub fn to_fields(&self) -> [String; 6] {
        [
            format!("{}", self.timestamp_s),
            self.trip_id.clone(),
            self.camera.as_str().into(),
            self.image_ref.clone(),
            format!("{}", self.steering_deg),
            format!("{}", self.speed_mps),
        ]
    }
}

/// Checks that timestamps strictly increase within each (trip, camera) stream
/// in the given order.
pub fn check_streams(samples: &[DrivingSample]) -> Result<()> {
    let mut last: BTreeMap<(&str, Camera), f64> = BTreeMap::new();
    for s in samples {
        if let Some(prev) = last.insert((&s.trip_id, s.camera), s.timestamp_s) {
            if !(s.timestamp_s > prev) {
                return Err(Error::NonMonotone {
                    trip: s.trip_id.clone(),
                    camera: s.camera.as_str(),
                    timestamp: s.timestamp_s,
                });
            }
        }
    }
    Ok(())
}

/// Sample indices per (trip, camera) stream in timestamp order, streams keyed by trip then camera.
pub fn streams(samples: &[DrivingSample]) -> BTreeMap<(String, Camera), Vec<usize>> {
    let mut out: BTreeMap<(String, Camera), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        out.entry((s.trip_id.clone(), s.camera)).or_default().push(i);
    }
    for idx in out.values_mut() {
        idx.sort_by(|&a, &b| samples[a].timestamp_s.total_cmp(&samples[b].timestamp_s));
    }
    out
}

/// Keeps samples at or above `min_speed_mps`.
pub fn filter_low_speed(samples: Vec<DrivingSample>, min_speed_mps: f64) -> Vec<DrivingSample> {
    samples.into_iter().filter(|s| s.speed_mps >= min_speed_mps).collect()
}

pub const LOW_SPEED_MPS: f64 = 4.0;

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: &str, trip: &str, cam: &str) -> [String; 6] {
        [t.into(), trip.into(), cam.into(), "a.ppm".into(), "1.5".into(), "10".into()]
    }

    fn parse(rows: &[[String; 6]]) -> Result<Vec<DrivingSample>> {
        let v = rows
            .iter()
            .enumerate()
            .map(|(i, r)| DrivingSample::from_fields(&r.iter().map(|s| s.as_str()).collect::<Vec<_>>(), i + 2))
            .collect::<Result<Vec<_>>>()?;
        check_streams(&v)?;
        Ok(v)
    }

    #[test]
    fn valid_rows() {
        let v = parse(&[row("0", "a", "Center"), row("0.1", "a", "Center"), row("0", "a", "Left")]).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[2].camera, Camera::Left);
        assert_eq!(streams(&v).len(), 2);
    }

    #[test]
    fn rear_camera_rejected_with_line() {
        let e = parse(&[row("0", "a", "Center"), row("0.1", "a", "rear")]).unwrap_err();
        assert!(matches!(e, Error::Record { line: 3, .. }), "{e}");
    }

    #[test]
    fn out_of_order_names_trip() {
        let e = parse(&[row("0.2", "trip7", "Center"), row("0.1", "trip7", "Center")]).unwrap_err();
        assert!(format!("{e}").contains("trip7"));
    }

    #[test]
    fn low_speed_boundary() {
        let mk = |v: f64| DrivingSample {
            timestamp_s: 0.0,
            trip_id: "a".into(),
            camera: Camera::Center,
            image_ref: String::new(),
            steering_deg: 0.0,
            speed_mps: v,
        };
        let kept = filter_low_speed(alloc::vec![mk(3.9), mk(4.0), mk(12.0)], LOW_SPEED_MPS);
        assert_eq!(kept.iter().map(|s| s.speed_mps).collect::<Vec<_>>(), [4.0, 12.0]);
        assert!(filter_low_speed(Vec::new(), LOW_SPEED_MPS).is_empty());
    }
}
