//! Samples, preprocessing, labeling and synthesis.

pub mod augment;
pub mod command;
pub mod image;
pub mod labels;
pub mod prep;
pub mod record;
pub mod sample;
pub mod split;
pub mod synth;
pub mod window;

pub use augment::{augment, Augmentation};
pub use command::SpeedCommand;
pub use image::{hsv_to_rgb, rgb_to_hsv, squeeze_resize, Image};
pub use labels::{label_speed_command, label_stream};
pub use sample::{check_streams, filter_low_speed, streams, Camera, DrivingSample, LOW_SPEED_MPS, MANIFEST_HEADER};
pub use split::{split_by_trip, Split, SplitManifest};
pub use synth::{recovery_angle_deg, synthesize_side_label, synthesize_speed_noise};
pub use window::build_feedback_window;
pub use prep::{prepare, preprocess_image, PrepConfig, PrepOutput};
pub use record::{Frame, Record};
