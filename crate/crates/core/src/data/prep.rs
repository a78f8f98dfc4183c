use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::labels::{label_stream, COMMAND_INTERVAL_S, MAX_ALIGN_GAP_S};
use crate::data::record::{Frame, Record};
use crate::data::split::{split_by_trip, Split, SplitManifest};
use crate::data::synth::{synthesize_side_label, RECOVERY_TIME_S, SIDE_CAMERA_OFFSET_M};
use crate::data::window::build_feedback_window;
use crate::data::{check_streams, rgb_to_hsv, squeeze_resize, streams, Camera, DrivingSample, Image};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PrepConfig {
    pub input_side: usize,
    /// Frames per record; more than one only for the sequence model.
    pub seq_len: usize,
    /// Ticks between consecutive frames of a sequence.
    pub seq_stride: usize,
    /// Only every `tick_stride`-th tick becomes a record.
    pub tick_stride: usize,
    pub speed_window: usize,
    pub side_synthesis: bool,
    pub d_y_m: f64,
    pub t_r_s: f64,
    pub min_speed_mps: f64,
    pub split_ratios: [f64; 3],
    pub split_seed: u64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            input_side: 128,
            seq_len: 1,
            seq_stride: 3,
            tick_stride: 1,
            speed_window: 10,
            side_synthesis: true,
            d_y_m: SIDE_CAMERA_OFFSET_M,
            t_r_s: RECOVERY_TIME_S,
            min_speed_mps: 4.0,
            split_ratios: [0.8, 0.1, 0.1],
            split_seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrepOutput {
    pub split: SplitManifest,
    pub train: Vec<Record>,
    pub val: Vec<Record>,
    pub test: Vec<Record>,
    /// Records skipped because synthesis was degenerate at their speed.
    pub synthesis_skipped: usize,
}

impl PrepOutput {
    pub fn records(&self, split: Split) -> &[Record] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Command counts over all splits, in [`SpeedCommand::ALL`] order.
    pub fn histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for r in self.train.iter().chain(&self.val).chain(&self.test) {
            h[r.command.index()] += 1;
        }
        h
    }
}

/// Converts a decoded camera image into the network's input frame.
pub fn preprocess_image(image: &Image, side: usize) -> Result<Frame> {
    Frame::from_tensor(&rgb_to_hsv(&squeeze_resize(image, side)?)?.to_tensor())
}

/// Turns a manifest into labeled, split records.
///
/// Labels (command, next speed, feedback window) always come from the center
/// stream of a trip; side-camera rows reuse them with an adjusted steering
/// angle. Samples without a full label (stream start and end, gaps) are
/// dropped.
pub fn prepare(
    samples: &[DrivingSample],
    load_image: &mut dyn FnMut(&str) -> Result<Image>,
    cfg: &PrepConfig,
) -> Result<PrepOutput> {
    if cfg.seq_len == 0 || cfg.tick_stride == 0 || cfg.seq_stride == 0 || cfg.speed_window == 0 {
        return Err(Error::Config("seq_len, strides and speed_window must be positive".into()));
    }
    check_streams(samples)?;
    let by_stream = streams(samples);
    let trips: Vec<&str> = by_stream.keys().map(|(t, _)| t.as_str()).collect();
    let split = split_by_trip(trips.iter().copied(), cfg.split_ratios, cfg.split_seed)?;

    let mut out = PrepOutput { split: split.clone(), ..Default::default() };
    let mut cache: BTreeMap<String, Frame> = BTreeMap::new();
    let mut frame = |r: &str| -> Result<Frame> {
        if let Some(f) = cache.get(r) {
            return Ok(f.clone());
        }
        let f = preprocess_image(&load_image(r)?, cfg.input_side)?;
        cache.insert(r.into(), f.clone());
        Ok(f)
    };

    for ((trip, camera), idx) in &by_stream {
        if *camera != Camera::Center {
            continue;
        }
        let center: Vec<&DrivingSample> = idx.iter().map(|&i| &samples[i]).collect();
        let times: Vec<f64> = center.iter().map(|s| s.timestamp_s).collect();
        let speeds: Vec<f64> = center.iter().map(|s| s.speed_mps).collect();
        let labels = label_stream(&times, &speeds, COMMAND_INTERVAL_S, MAX_ALIGN_GAP_S)?;
        let cams: &[Camera] = if cfg.side_synthesis { &Camera::ALL } else { &[Camera::Center] };
        let dest = match split.split_of(trip) {
            Some(Split::Train) => &mut out.train,
            Some(Split::Val) => &mut out.val,
            Some(Split::Test) => &mut out.test,
            None => unreachable!("every trip is assigned"),
        };
        for &cam in cams {
            // side rows are matched to center rows by timestamp
            let stream: Vec<&DrivingSample> = if cam == Camera::Center {
                center.clone()
            } else {
                let Some(side_idx) = by_stream.get(&(trip.clone(), cam)) else { continue };
                let by_time: BTreeMap<u64, &DrivingSample> =
                    side_idx.iter().map(|&i| (samples[i].timestamp_s.to_bits(), &samples[i])).collect();
                center.iter().filter_map(|c| by_time.get(&c.timestamp_s.to_bits()).copied()).collect()
            };
            if stream.len() != center.len() {
                return Err(Error::invalid(
                    "prepare",
                    format!("trip `{trip}`: {cam} stream does not share the center timestamps"),
                ));
            }
            for k in (0..center.len()).step_by(cfg.tick_stride) {
                let Some(command) = labels[k] else { continue };
                if k == 0 || k + 1 >= center.len() || center[k].speed_mps < cfg.min_speed_mps {
                    continue;
                }
                let steering_deg = if cam == Camera::Center {
                    center[k].steering_deg
                } else {
                    match synthesize_side_label(center[k].steering_deg, center[k].speed_mps, cam, cfg.d_y_m, cfg.t_r_s) {
                        Ok(v) => v,
                        Err(Error::SynthesisSkipped { .. }) => {
                            out.synthesis_skipped += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                };
                let mut frames = Vec::with_capacity(cfg.seq_len);
                for j in (0..cfg.seq_len).rev() {
                    let at = k.saturating_sub(j * cfg.seq_stride);
                    frames.push(frame(&stream[at].image_ref)?);
                }
                dest.push(Record {
                    trip_id: trip.clone(),
                    camera: cam,
                    tick: k as u32,
                    timestamp_s: center[k].timestamp_s,
                    frames,
                    steering_deg,
                    speed_mps: center[k].speed_mps,
                    next_speed_mps: center[k + 1].speed_mps,
                    window: build_feedback_window(&speeds, k, cfg.speed_window)?,
                    command,
                });
            }
        }
    }
    Ok(out)
}
