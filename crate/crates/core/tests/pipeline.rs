//! Preprocessing and training behavior on a small rendered dataset.

use std::collections::HashMap;

use emvc_core::data::synth::synthesize_side_label;
use emvc_core::data::{prepare, Camera, PrepConfig, PrepOutput, Record};
use emvc_core::models::{Model, ModelConfig, ModelKind};
use emvc_core::optim::OptimizerConfig;
use emvc_core::sim::dataset::parse_image_name;
use emvc_core::sim::{gen_dataset, CameraModel, DatasetConfig, Renderer, Trip};
use emvc_core::train::{evaluate, Predictor, TrainConfig, Trainer};
use emvc_core::models::Prediction;

fn dataset(trips: usize, n_frames: usize) -> Vec<Trip> {
    gen_dataset(&DatasetConfig { trips, n_frames, ..Default::default() }).unwrap()
}

fn prep(trips: &[Trip], cfg: &PrepConfig) -> PrepOutput {
    let by_id: HashMap<&str, &Trip> = trips.iter().map(|t| (t.id.as_str(), t)).collect();
    let renderer = Renderer::new(CameraModel::default());
    let samples: Vec<_> = trips.iter().flat_map(|t| t.samples()).collect();
    let mut load = |r: &str| {
        let (trip, cam, tick) = parse_image_name(r).unwrap();
        Ok(by_id[trip].render(&renderer, cam, tick, cfg.d_y_m))
    };
    prepare(&samples, &mut load, cfg).unwrap()
}

fn small_prep(side_synthesis: bool) -> (Vec<Trip>, PrepOutput) {
    let trips = dataset(4, 480);
    let cfg = PrepConfig {
        input_side: 16,
        tick_stride: 4,
        side_synthesis,
        split_ratios: [0.5, 0.25, 0.25],
        ..Default::default()
    };
    let out = prep(&trips, &cfg);
    (trips, out)
}

fn all(out: &PrepOutput) -> impl Iterator<Item = &Record> {
    out.train.iter().chain(&out.val).chain(&out.test)
}

#[test]
fn synthesis_flag_controls_side_rows() {
    let (trips, off) = small_prep(false);
    assert!(all(&off).all(|r| r.camera == Camera::Center));
    let (_, on) = small_prep(true);
    let by_id: HashMap<&str, &Trip> = trips.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut sides = 0;
    for r in all(&on).filter(|r| r.camera != Camera::Center) {
        let trip = by_id[r.trip_id.as_str()];
        let k = r.tick as usize;
        let expected =
            synthesize_side_label(trip.steering_deg[k], trip.states[k].speed, r.camera, 0.508, 1.0).unwrap();
        assert_eq!(r.steering_deg, expected);
        sides += 1;
    }
    assert_eq!(sides, 2 * all(&off).count());
    let h = on.histogram();
    let total: usize = h.iter().sum();
    assert_eq!(total, all(&on).count());
    let fractions: f64 = h.iter().map(|&c| c as f64 / total as f64).sum();
    assert!((fractions - 1.0).abs() < 1e-12);
}

#[test]
fn records_respect_split_and_speed() {
    let (_, out) = small_prep(true);
    for r in &out.train {
        assert!(out.split.train.contains(&r.trip_id));
    }
    for r in out.val.iter().chain(&out.test) {
        assert!(!out.split.train.contains(&r.trip_id));
    }
    assert!(all(&out).all(|r| r.speed_mps >= 4.0 && r.window.len() == 10 && r.tick > 0));
}

#[test]
fn prep_is_deterministic() {
    let (_, a) = small_prep(true);
    let (_, b) = small_prep(true);
    assert_eq!(a, b);
}

fn train_config(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 4,
        optimizer: OptimizerConfig { lr: 1e-3, ..Default::default() },
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn resumed_training_repeats_an_unbroken_run() {
    let (_, out) = small_prep(true);
    let model = Model::new(ModelConfig::toy(ModelKind::MultiModal), 2).unwrap();
    let mut unbroken = Trainer::new(model.clone(), train_config(6)).unwrap();
    let full: Vec<f64> = (0..6).map(|_| unbroken.train_step(&out.train).unwrap().loss).collect();

    let mut first = Trainer::new(model, train_config(6)).unwrap();
    let mut split: Vec<f64> = (0..3).map(|_| first.train_step(&out.train).unwrap().loss).collect();
    let mut second =
        Trainer::resume(first.model.clone(), train_config(6), first.optimizer_state().clone(), first.step()).unwrap();
    split.extend((0..3).map(|_| second.train_step(&out.train).unwrap().loss));
    assert_eq!(full, split);
    assert_eq!(unbroken.model, second.model);
}

#[test]
fn zero_task_weight_leaves_speed_branch_untouched() {
    let (_, out) = small_prep(false);
    let mut cfg = ModelConfig::toy(ModelKind::MultiModal);
    cfg.task_weight = 0.0;
    let model = Model::new(cfg, 3).unwrap();
    let mut trainer = Trainer::new(model.clone(), train_config(3)).unwrap();
    for _ in 0..3 {
        trainer.train_step(&out.train).unwrap();
    }
    for id in model.speed_branch_params() {
        let after = trainer.model.params().get(id);
        assert_eq!(after.data(), model.params().get(id).data(), "{}", model.params().name(id));
        assert!(after.grad().unwrap().iter().all(|&g| g == 0.0));
    }
    let [w, _] = model.steering_head_params();
    assert_ne!(trainer.model.params().get(w).data(), model.params().get(w).data());
}

struct Perfect;

impl Predictor for Perfect {
    fn predict(&mut self, r: &Record) -> emvc_core::Result<Prediction> {
        let mut logits = [0.0; 3];
        logits[r.command.index()] = 10.0;
        Ok(Prediction { steering_deg: r.steering_deg, speed_mps: Some(r.next_speed_mps), command_logits: Some(logits) })
    }
}

struct Zero;

impl Predictor for Zero {
    fn predict(&mut self, _: &Record) -> emvc_core::Result<Prediction> {
        Ok(Prediction { steering_deg: 0.0, speed_mps: None, command_logits: Some([0.0, 0.0, 1.0]) })
    }
}

#[test]
fn evaluation_stubs() {
    let (_, out) = small_prep(true);
    let mut test = out.test.clone();
    test[0].speed_mps = 3.9;
    let perfect = evaluate(&test, &mut Perfect, 4.0).unwrap();
    assert_eq!(perfect.angle_mae_deg, 0.0);
    assert_eq!(perfect.speed_mae_mps, Some(0.0));
    assert_eq!(perfect.command_accuracy, Some(1.0));
    assert_eq!((perfect.count, perfect.discarded), (test.len() - 1, 1));

    let zero = evaluate(&test, &mut Zero, 4.0).unwrap();
    let kept: Vec<&Record> = test.iter().filter(|r| r.speed_mps >= 4.0).collect();
    let mean_abs = kept.iter().map(|r| r.steering_deg.abs()).sum::<f64>() / kept.len() as f64;
    assert!((zero.angle_mae_deg - mean_abs).abs() < 1e-12);
    let confusion = zero.confusion.unwrap();
    for (i, row) in confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), kept.iter().filter(|r| r.command.index() == i).count());
    }
}
