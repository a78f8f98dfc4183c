use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{synth::SIDE_CAMERA_OFFSET_M, Camera, DrivingSample};
use crate::error::Result;
use crate::rng;
use crate::sim::episode::DT_S;
use crate::data::Image;
use crate::sim::oracle::Oracle;
use crate::sim::render::Renderer;
use crate::sim::road::{gen_road, Road, RoadConfig};
use crate::sim::vehicle::{step_vehicle, SimState};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub trips: usize,
    /// Total center-camera frames over all trips.
    pub n_frames: usize,
    pub road: RoadConfig,
    pub oracle: Oracle,
    pub camera_offset_m: f64,
    pub start_s: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 1,
            trips: 10,
            n_frames: 18_000,
            road: RoadConfig::default(),
            oracle: Oracle::default(),
            camera_offset_m: SIDE_CAMERA_OFFSET_M,
            start_s: 5.0,
        }
    }
}

/// One oracle drive: the road and the pose and controls at each 30 Hz tick.
#[derive(Clone, Debug, PartialEq)]
pub struct Trip {
    pub id: String,
    pub road: Road,
    pub states: Vec<SimState>,
    pub steering_deg: Vec<f64>,
}

impl Trip {
    /// Manifest rows (center, left, right per tick); `image_ref` names the
    /// file the caller should render for that row.
    pub fn samples(&self) -> Vec<DrivingSample> {
        let mut out = Vec::with_capacity(self.states.len() * 3);
        for (k, (st, &steer)) in self.states.iter().zip(&self.steering_deg).enumerate() {
            for cam in Camera::ALL {
                out.push(DrivingSample {
                    timestamp_s: k as f64 * DT_S,
                    trip_id: self.id.clone(),
                    camera: cam,
                    image_ref: image_name(&self.id, cam, k),
                    steering_deg: steer,
                    speed_mps: st.speed,
                });
            }
        }
        out
    }
}

impl Trip {
    /// The raw image a camera saw at `tick`.
    pub fn render(&self, renderer: &Renderer, camera: Camera, tick: usize, d_y_m: f64) -> Image {
        renderer.render(&self.road, &self.states[tick], camera.offset_m(d_y_m))
    }
}

/// Inverse of [`image_name`].
pub fn parse_image_name(name: &str) -> Option<(&str, Camera, usize)> {
    let (trip, file) = name.rsplit_once('/')?;
    let (cam, rest) = file.split_once('_')?;
    let tick = rest.strip_suffix(".ppm")?.parse().ok()?;
    Some((trip, cam.parse().ok()?, tick))
}

pub fn image_name(trip: &str, camera: Camera, tick: usize) -> String {
    format!("{trip}/{}_{tick:06}.ppm", camera.as_str().to_ascii_lowercase())
}

pub fn trip_road_seed(seed: u64, trip: usize) -> u64 {
    rng::derive(seed, &[0x7472_6970, trip as u64])
}

/// Drives the oracle over `cfg.trips` generated roads for `cfg.n_frames` ticks in total.
pub fn gen_dataset(cfg: &DatasetConfig) -> Result<Vec<Trip>> {
    let mut trips = Vec::with_capacity(cfg.trips);
    if cfg.trips == 0 {
        return Ok(trips);
    }
    for t in 0..cfg.trips {
        let frames = cfg.n_frames / cfg.trips + usize::from(t < cfg.n_frames % cfg.trips);
        let length = cfg.start_s + frames as f64 * DT_S * cfg.oracle.v_max_mps + 200.0;
        let road = gen_road(trip_road_seed(cfg.seed, t), length, &cfg.road)?;
        let p = road.pose_at(cfg.start_s);
        let mut state = SimState {
            x: p.x,
            y: p.y,
            heading: p.heading,
            speed: cfg.oracle.reference_speed(&road, cfg.start_s),
            time: 0.0,
        };
        let mut states = Vec::with_capacity(frames);
        let mut steering_deg = Vec::with_capacity(frames);
        for k in 0..frames {
            let out = cfg.oracle.act(&road, &state, DT_S);
            states.push(state);
            steering_deg.push(out.steering_deg);
            state = step_vehicle(&state, out.steering_deg, out.target_speed_mps, DT_S, &cfg.oracle.vehicle)?;
            state.time = (k + 1) as f64 * DT_S;
        }
        trips.push(Trip { id: format!("trip{t:03}"), road, states, steering_deg });
    }
    Ok(trips)
}
