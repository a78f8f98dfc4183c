use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoadConfig {
    pub half_width_m: f64,
    pub straight_m: (f64, f64),
    pub radius_m: (f64, f64),
    /// Heading change of each arc, degrees.
    pub sweep_deg: (f64, f64),
    /// Largest heading relative to the x-axis; keeps the road from folding back on itself.
    pub max_heading_deg: f64,
    pub curved: bool,
}

impl Default for RoadConfig {
    fn default() -> Self {
        RoadConfig {
            half_width_m: 1.75,
            straight_m: (20.0, 80.0),
            radius_m: (30.0, 200.0),
            sweep_deg: (30.0, 90.0),
            max_heading_deg: 75.0,
            curved: true,
        }
    }
}

/// A straight (`curvature == 0`) or constant-curvature piece of centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub s0: f64,
    pub length: f64,
    pub x0: f64,
    pub y0: f64,
    pub heading0: f64,
    /// Signed curvature, positive turning left.
    pub curvature: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Nearest centerline point to a query position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub s: f64,
    /// Signed distance, positive when the query lies left of the direction of travel.
    pub lateral: f64,
    pub heading: f64,
    pub curvature: f64,
}

impl Segment {
    pub fn pose_at(&self, ds: f64) -> Pose {
        let h = self.heading0 + self.curvature * ds;
        if self.curvature == 0.0 {
            let (s, c) = libm::sincos(self.heading0);
            Pose { x: self.x0 + c * ds, y: self.y0 + s * ds, heading: h }
        } else {
            let (s0, c0) = libm::sincos(self.heading0);
            let (s1, c1) = libm::sincos(h);
            let k = self.curvature;
            Pose { x: self.x0 + (s1 - s0) / k, y: self.y0 - (c1 - c0) / k, heading: h }
        }
    }

    pub fn end(&self) -> Pose {
        self.pose_at(self.length)
    }

    fn project(&self, x: f64, y: f64) -> (f64, f64) {
        // returns (ds within segment, squared distance)
        let ds = if self.curvature == 0.0 {
            let (s, c) = libm::sincos(self.heading0);
            ((x - self.x0) * c + (y - self.y0) * s).clamp(0.0, self.length)
        } else {
            let k = self.curvature;
            let r = 1.0 / k;
            let (s0, c0) = libm::sincos(self.heading0);
            // circle center lies to the left of travel for k > 0
            let cx = self.x0 - s0 * r;
            let cy = self.y0 + c0 * r;
            let (dx, dy) = (x - cx, y - cy);
            if dx == 0.0 && dy == 0.0 {
                0.0
            } else {
                // angle of the radius vector from center to the start point
                let a0 = libm::atan2(self.y0 - cy, self.x0 - cx);
                let a = libm::atan2(dy, dx);
                let mut d = wrap_angle(a - a0);
                if k < 0.0 {
                    d = -d;
                }
                let arc = d * libm::fabs(r);
                if arc < 0.0 || arc > self.length {
                    // pick whichever end is closer
                    let p0 = self.pose_at(0.0);
                    let p1 = self.end();
                    let d0 = (p0.x - x) * (p0.x - x) + (p0.y - y) * (p0.y - y);
                    let d1 = (p1.x - x) * (p1.x - x) + (p1.y - y) * (p1.y - y);
                    if d0 <= d1 {
                        0.0
                    } else {
                        self.length
                    }
                } else {
                    arc
                }
            }
        };
        let p = self.pose_at(ds);
        (ds, (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y))
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = libm::fmod(a + PI, 2.0 * PI);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    a - PI
}

/// Piecewise centerline parameterized by arc length, starting at the origin heading along +x.
#[derive(Clone, Debug, PartialEq)]
pub struct Road {
    seed: u64,
    half_width_m: f64,
    segments: Vec<Segment>,
}

impl Road {
    pub fn from_segments(seed: u64, half_width_m: f64, pieces: &[(f64, f64)]) -> Result<Road> {
        if !(half_width_m > 0.0) {
            return Err(Error::invalid("road", "half width must be positive"));
        }
        let mut segments: Vec<Segment> = Vec::with_capacity(pieces.len());
        let mut start = Pose { x: 0.0, y: 0.0, heading: 0.0 };
        let mut s0 = 0.0;
        for &(length, curvature) in pieces {
            if !(length > 0.0) || !curvature.is_finite() {
                return Err(Error::invalid("road", "segments need positive length and finite curvature"));
            }
            let seg = Segment { s0, length, x0: start.x, y0: start.y, heading0: start.heading, curvature };
            start = seg.end();
            s0 += length;
            segments.push(seg);
        }
        if segments.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(Road { seed, half_width_m, segments })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn half_width_m(&self) -> f64 {
        self.half_width_m
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        let last = self.segments.last().expect("non-empty");
        last.s0 + last.length
    }

    fn segment_index(&self, s: f64) -> usize {
        self.segments.partition_point(|seg| seg.s0 + seg.length < s).min(self.segments.len() - 1)
    }

    /// Centerline pose at arc length `s`, clamped to the road.
    pub fn pose_at(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length());
        let seg = &self.segments[self.segment_index(s)];
        seg.pose_at(s - seg.s0)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.segments[self.segment_index(s.clamp(0.0, self.length()))].curvature
    }

    /// Nearest centerline point over the whole road.
    pub fn project(&self, x: f64, y: f64) -> Projection {
        self.project_range(x, y, 0, self.segments.len())
    }

    /// Nearest centerline point among segments overlapping `[s_lo, s_hi]`.
    pub fn project_near(&self, x: f64, y: f64, s_lo: f64, s_hi: f64) -> Projection {
        let a = self.segment_index(s_lo.max(0.0));
        let b = self.segment_index(s_hi.min(self.length())) + 1;
        self.project_range(x, y, a, b)
    }

    fn project_range(&self, x: f64, y: f64, a: usize, b: usize) -> Projection {
        let mut best = (f64::INFINITY, 0, 0.0);
        for (i, seg) in self.segments[a..b].iter().enumerate() {
            let (ds, d2) = seg.project(x, y);
            if d2 < best.0 {
                best = (d2, a + i, ds);
            }
        }
        let seg = &self.segments[best.1];
        let p = seg.pose_at(best.2);
        let (sn, cs) = libm::sincos(p.heading);
        let lateral = -(x - p.x) * sn + (y - p.y) * cs;
        Projection { s: seg.s0 + best.2, lateral, heading: p.heading, curvature: seg.curvature }
    }

    /// Signed cross-track error of a position, positive left of the path.
    pub fn cross_track_error(&self, x: f64, y: f64) -> f64 {
        self.project(x, y).lateral
    }
}

/// Alternating straights and arcs of alternating turn direction, at least `length_m` long.
pub fn gen_road(seed: u64, length_m: f64, cfg: &RoadConfig) -> Result<Road> {
    if !(length_m > 0.0) {
        return Err(Error::invalid("gen_road", "length must be positive"));
    }
    if !cfg.curved {
        return Road::from_segments(seed, cfg.half_width_m, &[(length_m, 0.0)]);
    }
    let mut r = rng::stream(seed, &[0x726f_6164]);
    let mut pieces = Vec::new();
    let mut total = 0.0;
    let mut heading = 0.0f64;
    let mut sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
    let limit = cfg.max_heading_deg.to_radians();
    while total < length_m {
        let straight = r.random_range(cfg.straight_m.0..=cfg.straight_m.1);
        pieces.push((straight, 0.0));
        total += straight;
        if total >= length_m {
            break;
        }
        let radius = r.random_range(cfg.radius_m.0..=cfg.radius_m.1);
        let mut sweep = r.random_range(cfg.sweep_deg.0..=cfg.sweep_deg.1).to_radians();
        // keep the heading within the limit so the road never folds back
        let room = limit - sign * heading;
        sweep = sweep.min(room);
        if sweep > 1e-6 {
            pieces.push((sweep * radius, sign / radius));
            heading += sign * sweep;
            total += sweep * radius;
        }
        sign = -sign;
    }
    Road::from_segments(seed, cfg.half_width_m, &pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_road_along_x() {
        let road = gen_road(1, 100.0, &RoadConfig { curved: false, ..Default::default() }).unwrap();
        assert_eq!(road.segments().len(), 1);
        let p = road.pose_at(40.0);
        assert_eq!((p.x, p.y, p.heading), (40.0, 0.0, 0.0));
        assert_eq!(road.cross_track_error(12.0, 0.5), 0.5);
        assert_eq!(road.cross_track_error(12.0, 0.0), 0.0);
    }

    #[test]
    fn joints_are_tangent_continuous() {
        for seed in 0..20 {
            let road = gen_road(seed, 2000.0, &RoadConfig::default()).unwrap();
            assert!(road.length() >= 2000.0);
            assert_eq!(road, gen_road(seed, 2000.0, &RoadConfig::default()).unwrap());
            for w in road.segments().windows(2) {
                let end = w[0].end();
                assert!((end.x - w[1].x0).abs() < 1e-9 && (end.y - w[1].y0).abs() < 1e-9);
                assert!(wrap_angle(end.heading - w[1].heading0).abs() < 1e-9);
            }
            for seg in road.segments() {
                assert!(seg.heading0.abs() <= 75f64.to_radians() + 1e-9);
                if seg.curvature != 0.0 {
                    let r = 1.0 / seg.curvature.abs();
                    assert!((30.0..=200.0).contains(&r));
                }
            }
        }
    }

    #[test]
    fn arc_projection() {
        let road = Road::from_segments(0, 1.75, &[(10.0, 0.0), (PI / 2.0 * 50.0, 1.0 / 50.0), (10.0, 0.0)]).unwrap();
        // arc center at (10, 50); a point 2 m toward the center is 2 m left
        let mid = road.pose_at(10.0 + PI / 4.0 * 50.0);
        let (s, c) = libm::sincos(mid.heading);
        let pr = road.project(mid.x - 2.0 * s, mid.y + 2.0 * c);
        assert!((pr.lateral - 2.0).abs() < 1e-9);
        assert!((pr.s - (10.0 + PI / 4.0 * 50.0)).abs() < 1e-9);
        let end = road.pose_at(1e9);
        assert!((end.heading - PI / 2.0).abs() < 1e-12);
    }
}
