//! Synthetic road world for closed-loop evaluation and data generation.

pub mod dataset;
pub mod episode;
pub mod oracle;
pub mod render;
pub mod road;
pub mod vehicle;

pub use dataset::{gen_dataset, DatasetConfig, Trip};
pub use episode::{preprocess, run_episode, Driver, EpisodeConfig, EpisodeReport, ModelDriver, OracleDriver, Perturbation, Tick, DT_S};
pub use oracle::Oracle;
pub use render::{render_frame, CameraModel, Renderer};
pub use road::{gen_road, Pose, Projection, Road, RoadConfig};
pub use vehicle::{step_vehicle, SimState, VehicleParams};
