use alloc::vec::Vec;

use crate::data::{squeeze_resize, Image};
use crate::error::Result;
use crate::sim::road::Road;
use crate::sim::vehicle::SimState;

const SKY: [f64; 3] = [0.55, 0.7, 0.9];
const GRASS: [f64; 3] = [0.25, 0.45, 0.2];
const ROAD: [f64; 3] = [0.32, 0.32, 0.34];
const EDGE: [f64; 3] = [0.92, 0.92, 0.92];
const CENTER: [f64; 3] = [0.95, 0.85, 0.3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub mount_height_m: f64,
    pub pitch_down_deg: f64,
    pub edge_line_m: f64,
    pub center_line_m: f64,
    pub dash_period_m: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            width: 96,
            height: 48,
            hfov_deg: 70.0,
            mount_height_m: 1.4,
            pitch_down_deg: 8.0,
            edge_line_m: 0.25,
            center_line_m: 0.2,
            dash_period_m: 8.0,
        }
    }
}

/// Flat-ground perspective renderer with per-pixel ground rays precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct Renderer {
    camera: CameraModel,
    /// Ground hit of each pixel as (forward, right) meters, or `None` for sky.
    rays: Vec<Option<(f64, f64)>>,
    max_forward: f64,
}

impl Renderer {
    pub fn new(camera: CameraModel) -> Self {
        let tan_h = libm::tan(camera.hfov_deg.to_radians() / 2.0);
        let tan_v = tan_h * camera.height as f64 / camera.width as f64;
        let (sp, cp) = libm::sincos(camera.pitch_down_deg.to_radians());
        let mut rays = Vec::with_capacity(camera.width * camera.height);
        let mut max_forward = 0.0f64;
        for row in 0..camera.height {
            let v = 1.0 - (row as f64 + 0.5) / camera.height as f64 * 2.0;
            let y_cam = v * tan_v;
            for col in 0..camera.width {
                let u = (col as f64 + 0.5) / camera.width as f64 * 2.0 - 1.0;
                let x_cam = u * tan_h;
                let forward = cp + y_cam * sp;
                let up = -sp + y_cam * cp;
                if up >= -1e-9 {
                    rays.push(None);
                } else {
                    let t = camera.mount_height_m / -up;
                    max_forward = max_forward.max(forward * t);
                    rays.push(Some((forward * t, x_cam * t)));
                }
            }
        }
        Renderer { camera, rays, max_forward }
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    /// Renders the raw camera image for a camera `camera_offset_m` to the right of the vehicle axis.
    pub fn render(&self, road: &Road, state: &SimState, camera_offset_m: f64) -> Image {
        let c = &self.camera;
        let (sh, ch) = libm::sincos(state.heading);
        let cam_x = state.x + sh * camera_offset_m;
        let cam_y = state.y - ch * camera_offset_m;
        let here = road.project(cam_x, cam_y).s;
        let (s_lo, s_hi) = (here - 30.0, here + self.max_forward.min(400.0) * 1.5 + 30.0);
        let hw = road.half_width_m();
        let mut data = Vec::with_capacity(c.width * c.height * 3);
        for ray in &self.rays {
            let color = match *ray {
                None => SKY,
                Some((fwd, right)) => {
                    let gx = cam_x + fwd * ch + right * sh;
                    let gy = cam_y + fwd * sh - right * ch;
                    let p = road.project_near(gx, gy, s_lo, s_hi);
                    let d = libm::fabs(p.lateral);
                    if d > hw {
                        GRASS
                    } else if d > hw - c.edge_line_m {
                        EDGE
                    } else if d < c.center_line_m / 2.0 && libm::fmod(p.s, c.dash_period_m) < c.dash_period_m / 2.0 {
                        CENTER
                    } else {
                        ROAD
                    }
                }
            };
            data.extend_from_slice(&color);
        }
        Image::new(c.height, c.width, data).expect("renderer dims")
    }
}

/// Renders and squeezes to a `side`×`side` image.
pub fn render_frame(renderer: &Renderer, road: &Road, state: &SimState, camera_offset_m: f64, side: usize) -> Result<Image> {
    squeeze_resize(&renderer.render(road, state, camera_offset_m), side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::road::{gen_road, RoadConfig};

    fn straight() -> Road {
        gen_road(0, 500.0, &RoadConfig { curved: false, ..Default::default() }).unwrap()
    }

    fn at(x: f64, y: f64) -> SimState {
        SimState { x, y, heading: 0.0, speed: 10.0, time: 0.0 }
    }

    fn marking_centroid(img: &Image) -> f64 {
        let (mut sum, mut n) = (0.0, 0.0);
        for r in 0..img.height() {
            for c in 0..img.width() {
                let p = img.pixel(r, c);
                if p == EDGE || p == CENTER {
                    sum += c as f64;
                    n += 1.0;
                }
            }
        }
        sum / n
    }

    #[test]
    fn centered_view_is_symmetric() {
        let r = Renderer::new(CameraModel::default());
        let img = r.render(&straight(), &at(10.0, 0.0), 0.0);
        let mirrored = img.flip_horizontal();
        for row in 0..img.height() {
            let row_sum = |im: &Image| (0..im.width()).map(|c| im.pixel(row, c).iter().sum::<f64>()).sum::<f64>();
            let diff = libm::fabs(row_sum(&img) - row_sum(&mirrored));
            assert!(diff < 1e-9);
        }
        let differing = (0..img.height())
            .flat_map(|row| (0..img.width()).map(move |c| (row, c)))
            .filter(|&(row, c)| img.pixel(row, c) != mirrored.pixel(row, c))
            .count();
        assert!(differing <= img.width(), "{differing}");
    }

    #[test]
    fn right_offset_moves_markings_left() {
        let r = Renderer::new(CameraModel::default());
        let road = straight();
        let a = marking_centroid(&r.render(&road, &at(10.0, 0.0), 0.0));
        let b = marking_centroid(&r.render(&road, &at(10.0, 0.0), 0.5));
        assert!(b < a - 1.0, "{a} {b}");
    }

    #[test]
    fn camera_offset_equals_vehicle_offset() {
        let r = Renderer::new(CameraModel::default());
        for seed in 0..3 {
            let road = gen_road(seed, 800.0, &RoadConfig::default()).unwrap();
            let p = road.pose_at(120.0);
            let base = SimState { x: p.x, y: p.y, heading: p.heading, speed: 10.0, time: 0.0 };
            let via_camera = r.render(&road, &base, -0.508);
            let via_pose = r.render(&road, &base.shifted_left(0.508), 0.0);
            let differing = (0..via_camera.height())
                .flat_map(|row| (0..via_camera.width()).map(move |c| (row, c)))
                .filter(|&(row, c)| via_camera.pixel(row, c) != via_pose.pixel(row, c))
                .count();
            assert!(differing <= via_camera.width(), "{differing}");
        }
    }

    #[test]
    fn far_off_road_still_renders() {
        let r = Renderer::new(CameraModel::default());
        let img = render_frame(&r, &straight(), &at(10.0, 40.0), 0.0, 32).unwrap();
        assert_eq!((img.height(), img.width()), (32, 32));
    }
}
