//! The six workflow commands. Each reads its inputs from the configured
//! paths and writes only inside its own output directory.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use emvc_core::control::Smoother;
use emvc_core::data::{prepare, Camera, PrepOutput, Record, Split, SpeedCommand};
use emvc_core::gradcheck::{GradCheckConfig, GradCheckReport};
use emvc_core::models::{grad_check_model_in, Model, ModelConfig, ModelKind};
use emvc_core::sim::dataset::image_name;
use emvc_core::sim::{
    gen_dataset, gen_road, run_episode, CameraModel, Driver, EpisodeReport, ModelDriver, Oracle, OracleDriver, Renderer,
    RoadConfig, DT_S,
};
use emvc_core::train::{evaluate, Metrics, Trainer};
use emvc_core::Graph;

use crate::artifacts::{load_checkpoint, load_checkpoint_with, load_state, save_checkpoint, save_state, TrainState};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::images::{read_image, write_ppm};
use crate::manifest::{read_manifest, write_manifest};
use crate::shard::{read_shard, write_shard, ShardHeader};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `<name>.config` with the resolved configuration into `dir`.
fn echo_config(dir: &Path, name: &str, cfg: &RunConfig) -> Result<()> {
    write_text(&dir.join(format!("{name}.config")), &cfg.echo())
}

pub fn shard_path(cfg: &RunConfig, split: Split) -> PathBuf {
    cfg.path("shard_dir").join(format!("{}.shard", split.as_str()))
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|x| x.as_str() == s)
        .ok_or_else(|| CliError::Config(format!("unknown split `{s}` (train, val, test)")))
}

pub struct DatagenSummary {
    pub trips: usize,
    pub rows: usize,
}

/// Drives the oracle over generated roads and writes the manifest, the
/// three camera images per tick, and a parameter README.
pub fn datagen(cfg: &RunConfig) -> Result<DatagenSummary> {
    let dir = cfg.path("data_dir");
    create_dir(&dir)?;
    let dcfg = cfg.dataset_config()?;
    let trips = gen_dataset(&dcfg)?;
    let renderer = Renderer::new(CameraModel::default());
    let mut samples = Vec::new();
    for trip in &trips {
        create_dir(&dir.join(&trip.id))?;
        for tick in 0..trip.states.len() {
            for cam in Camera::ALL {
                let img = trip.render(&renderer, cam, tick, dcfg.camera_offset_m);
                write_ppm(&dir.join(image_name(&trip.id, cam, tick)), &img)?;
            }
        }
        samples.extend(trip.samples());
    }
    write_manifest(&dir.join("manifest.csv"), &samples)?;
    let mut readme = String::new();
    let _ = writeln!(readme, "Synthetic driving dataset generated by an oracle lane keeper.");
    let _ = writeln!(readme, "trips: {}", trips.len());
    let _ = writeln!(readme, "center frames: {}", samples.len() / 3);
    let _ = writeln!(readme, "manifest rows: {}", samples.len());
    let _ = writeln!(readme, "tick rate: 30 Hz");
    let _ = writeln!(readme, "side camera offset: {} m", dcfg.camera_offset_m);
    let _ = writeln!(readme, "lane half-width: {} m", dcfg.road.half_width_m);
    let _ = writeln!(readme, "oracle speed cap: {} m/s", dcfg.oracle.v_max_mps);
    let _ = writeln!(readme, "\nResolved configuration:\n{}", cfg.echo());
    write_text(&dir.join("README.txt"), &readme)?;
    echo_config(&dir, "datagen", cfg)?;
    Ok(DatagenSummary { trips: trips.len(), rows: samples.len() })
}

/// Runs the preprocessing pipeline on a manifest without writing anything.
pub fn prepare_from_manifest(cfg: &RunConfig) -> Result<PrepOutput> {
    let manifest = cfg.manifest_path();
    let samples = read_manifest(&manifest)?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let refs: BTreeSet<&str> = samples.iter().map(|s| s.image_ref.as_str()).collect();
    let missing: Vec<String> = refs
        .iter()
        .map(|r| base.join(r))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
        return Err(CliError::Operational(format!(
            "{} referenced images are missing; first {}:\n  {}",
            missing.len(),
            shown.len(),
            shown.join("\n  ")
        )));
    }
    let mut load = |r: &str| {
        read_image(&base.join(r))
            .map_err(|e| emvc_core::Error::ImageLoad { reference: r.to_string(), detail: e.to_string() })
    };
    Ok(prepare(&samples, &mut load, &cfg.prep_config()?)?)
}

pub struct PrepSummary {
    pub counts: [usize; 3],
    pub histogram: [usize; 3],
    pub synthesis_skipped: usize,
}

impl PrepSummary {
    pub fn fractions(&self) -> [f64; 3] {
        let total: usize = self.histogram.iter().sum();
        self.histogram.map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
    }

    pub fn histogram_text(&self) -> String {
        let mut s = String::from("command histogram:\n");
        for (c, (n, f)) in SpeedCommand::ALL.iter().zip(self.histogram.iter().zip(self.fractions())) {
            let _ = writeln!(s, "  {:<10} {n:>8} {:.4}", c.as_str(), f);
        }
        s
    }
}

/// Filters, labels, synthesizes and splits the manifest into three shards.
pub fn prep(cfg: &RunConfig) -> Result<PrepSummary> {
    let out = prepare_from_manifest(cfg)?;
    let dir = cfg.path("shard_dir");
    create_dir(&dir)?;
    let pcfg = cfg.prep_config()?;
    let header = ShardHeader {
        config_hash: cfg.hash(),
        config_text: cfg.to_text(),
        input_side: pcfg.input_side,
        seq_len: pcfg.seq_len,
        window: pcfg.speed_window,
    };
    let mut split_text = String::from("trip_id,split\n");
    for split in Split::ALL {
        write_shard(&shard_path(cfg, split), &header, out.records(split))?;
        for trip in out.split.trips(split) {
            let _ = writeln!(split_text, "{trip},{}", split.as_str());
        }
    }
    write_text(&dir.join("splits.csv"), &split_text)?;
    let summary = PrepSummary {
        counts: Split::ALL.map(|s| out.records(s).len()),
        histogram: out.histogram(),
        synthesis_skipped: out.synthesis_skipped,
    };
    write_text(&dir.join("histogram.txt"), &summary.histogram_text())?;
    echo_config(&dir, "prep", cfg)?;
    Ok(summary)
}

fn check_shard(header: &ShardHeader, model: &ModelConfig, path: &Path) -> Result<()> {
    let mut problems = Vec::new();
    if header.input_side != model.input_side {
        problems.push(format!("input side {} vs model {}", header.input_side, model.input_side));
    }
    if model.kind == ModelKind::MultiModal && header.window != model.speed_window {
        problems.push(format!("feedback window {} vs model {}", header.window, model.speed_window));
    }
    if model.kind == ModelKind::SpeedCommand && header.seq_len < model.seq_len {
        problems.push(format!("sequence length {} vs model {}", header.seq_len, model.seq_len));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Operational(format!("{} does not fit the model: {}", path.display(), problems.join("; "))))
    }
}

pub fn load_split(cfg: &RunConfig, split: Split, model: &ModelConfig) -> Result<Vec<Record>> {
    let path = shard_path(cfg, split);
    let (header, records) = read_shard(&path)?;
    check_shard(&header, model, &path)?;
    Ok(records)
}

const TRAIN_EVAL_SAMPLES: usize = 512;

/// A fixed, evenly spaced subset of the training records for train-set metrics.
fn train_probe(train: &[Record]) -> Vec<Record> {
    let stride = train.len().div_ceil(TRAIN_EVAL_SAMPLES).max(1);
    train.iter().step_by(stride).cloned().collect()
}

fn metric_cells(m: &Metrics) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    format!("{:.6},{},{}", m.angle_mae_deg, opt(m.speed_mae_mps), opt(m.command_accuracy))
}

/// Keeps the header and the rows logged before `step` of an interrupted run.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut kept = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let logged = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
        if logged.is_none_or(|s| s <= step) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    write_text(path, &kept)
}

fn append(path: &Path) -> Result<File> {
    OpenOptions::new().append(true).create(true).open(path).map_err(|e| CliError::io(path, e))
}

pub struct TrainSummary {
    pub steps: usize,
    pub best_val_angle_mae_deg: f64,
    pub last: Option<Metrics>,
}

/// Minibatch training with periodic validation. Writes `losses.csv` (every
/// step), `metrics.csv` (every evaluation), the best-validation checkpoint
/// `model.emvc`, and `last.emvc` plus `state.emvt` for resuming.
pub fn train(cfg: &RunConfig, log: &mut dyn Write) -> Result<TrainSummary> {
    let dir = cfg.path("train_dir");
    create_dir(&dir)?;
    let model_cfg = cfg.model_config()?;
    let tc = cfg.train_config()?;
    let eval_every: usize = cfg.parse_value("eval_every")?;
    let min_speed: f64 = cfg.parse_value("min_speed_mps")?;
    let train = load_split(cfg, Split::Train, &model_cfg)?;
    let val = load_split(cfg, Split::Val, &model_cfg)?;
    if train.is_empty() {
        return Err(CliError::Operational("the training shard is empty".into()));
    }
    let probe = train_probe(&train);

    let losses_path = dir.join("losses.csv");
    let metrics_path = dir.join("metrics.csv");
    let last_path = dir.join("last.emvc");
    let state_path = dir.join("state.emvt");
    let best_path = dir.join("model.emvc");
    let resuming = cfg.flag("resume")? && last_path.is_file() && state_path.is_file();
    let (mut trainer, mut best) = if resuming {
        let (model, overrides) = load_checkpoint_with(&last_path, &model_cfg)?;
        for o in overrides {
            writeln!(log, "warning: {} = {} overrides the stored {}", o.key, o.applied, o.stored).ok();
        }
        let state = load_state(&state_path)?;
        truncate_log(&losses_path, state.step)?;
        truncate_log(&metrics_path, state.step)?;
        writeln!(log, "resuming at step {}", state.step).ok();
        (Trainer::resume(model, tc.clone(), state.optimizer, state.step as usize)?, state.best_val)
    } else {
        let head = format!("# config hash {}\n", cfg.hash());
        write_text(&losses_path, &format!("{head}step,loss,angle_loss,second_loss\n"))?;
        write_text(
            &metrics_path,
            &format!(
                "{head}step,train_angle_mae_deg,train_speed_mae_mps,train_command_accuracy,\
                 val_angle_mae_deg,val_speed_mae_mps,val_command_accuracy\n"
            ),
        )?;
        (Trainer::new(Model::new(model_cfg, tc.seed)?, tc.clone())?, f64::INFINITY)
    };
    echo_config(&dir, "train", cfg)?;

    let mut losses = append(&losses_path)?;
    let mut metrics_log = append(&metrics_path)?;
    let mut last = None;
    while trainer.step() < tc.steps {
        let st = trainer.train_step(&train)?;
        let second = st.second_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(losses, "{},{},{},{}", st.step + 1, st.loss, st.angle_loss, second)
            .map_err(|e| CliError::io(&losses_path, e))?;
        let done = trainer.step();
        if done == tc.steps || (eval_every > 0 && done % eval_every == 0) {
            let tm = evaluate(&probe, &mut &trainer.model, min_speed)?;
            let vm = evaluate(&val, &mut &trainer.model, min_speed)?;
            writeln!(metrics_log, "{done},{},{}", metric_cells(&tm), metric_cells(&vm))
                .map_err(|e| CliError::io(&metrics_path, e))?;
            writeln!(
                log,
                "step {done}: loss {:.4} train angle {:.3} deg, val angle {:.3} deg{}{}",
                st.loss,
                tm.angle_mae_deg,
                vm.angle_mae_deg,
                vm.speed_mae_mps.map(|v| format!(", val speed {v:.3} m/s")).unwrap_or_default(),
                vm.command_accuracy.map(|v| format!(", val command accuracy {:.1}%", v * 100.0)).unwrap_or_default(),
            )
            .ok();
            // with no validation data the latest weights count as best
            let score = if vm.count > 0 { vm.angle_mae_deg } else { f64::NEG_INFINITY };
            if score <= best || !best_path.is_file() {
                best = best.min(score);
                save_checkpoint(&best_path, &trainer.model)?;
            }
            losses.flush().map_err(|e| CliError::io(&losses_path, e))?;
            metrics_log.flush().map_err(|e| CliError::io(&metrics_path, e))?;
            save_checkpoint(&last_path, &trainer.model)?;
            save_state(
                &state_path,
                &TrainState { step: done as u64, best_val: best, optimizer: trainer.optimizer_state().clone() },
            )?;
            last = Some(vm);
        }
    }
    Ok(TrainSummary { steps: trainer.step(), best_val_angle_mae_deg: best, last })
}

pub fn metrics_text(cfg: &RunConfig, checkpoint: &Path, split: Split, m: &Metrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config hash {}", cfg.hash());
    let _ = writeln!(s, "checkpoint = {}", checkpoint.display());
    let _ = writeln!(s, "split = {}", split.as_str());
    let _ = writeln!(s, "scored = {}", m.count);
    let _ = writeln!(s, "discarded_low_speed = {}", m.discarded);
    let _ = writeln!(s, "angle_mae_deg = {:.6}", m.angle_mae_deg);
    if let Some(v) = m.speed_mae_mps {
        let _ = writeln!(s, "speed_mae_mps = {v:.6}");
    }
    if let Some(v) = m.command_accuracy {
        let _ = writeln!(s, "command_accuracy = {v:.6}");
    }
    if let Some(c) = m.confusion {
        let _ = writeln!(s, "# confusion: rows true, columns predicted");
        for (name, row) in SpeedCommand::ALL.iter().zip(c) {
            let _ = writeln!(s, "confusion.{} = {} {} {}", name.as_str(), row[0], row[1], row[2]);
        }
    }
    s
}

/// Scores a checkpoint on one shard and writes `metrics.txt`.
pub fn eval(cfg: &RunConfig) -> Result<Metrics> {
    let checkpoint = cfg.checkpoint_path();
    let model = load_checkpoint(&checkpoint)?;
    let split = parse_split(cfg.get("eval_split"))?;
    let records = load_split(cfg, split, model.config())?;
    let m = evaluate(&records, &mut &model, cfg.parse_value("min_speed_mps")?)?;
    let dir = cfg.path("eval_dir");
    create_dir(&dir)?;
    write_text(&dir.join("metrics.txt"), &metrics_text(cfg, &checkpoint, split, &m))?;
    echo_config(&dir, "eval", cfg)?;
    Ok(m)
}

pub fn summary_line(r: &EpisodeReport) -> String {
    format!(
        "max|cte| {:.4} m, mean|cte| {:.4} m, duration {:.2} s, off_road {}{}",
        r.max_abs_cte,
        r.mean_abs_cte,
        r.ticks.last().map(|t| t.t).unwrap_or(0.0),
        r.off_road,
        r.off_road_at_s.map(|t| format!(" at {t:.2} s")).unwrap_or_default()
    )
}

pub fn episode_csv(r: &EpisodeReport) -> String {
    let mut s = String::from("t,cte,heading_err,speed,steering\n");
    for t in &r.ticks {
        let _ = writeln!(s, "{},{},{},{},{}", t.t, t.cte, t.heading_err, t.speed, t.steering);
    }
    s
}

/// Closed-loop episode on a fresh road with the model (or the oracle).
/// Writes `episode.csv`, the `episode.config` sidecar and `summary.txt`.
pub fn drive(cfg: &RunConfig) -> Result<EpisodeReport> {
    let ecfg = cfg.episode_config()?;
    let v_max: f64 = cfg.parse_value("drive.v_max_mps")?;
    let road_cfg = RoadConfig {
        half_width_m: cfg.parse_value("road.half_width_m")?,
        curved: cfg.flag("road.curved")?,
        ..RoadConfig::default()
    };
    let length = ecfg.start_s + ecfg.duration_s * v_max.max(1.0) + 100.0;
    let road = gen_road(cfg.parse_value("drive.road_seed")?, length, &road_cfg)?;
    let report = if cfg.flag("drive.oracle")? {
        let oracle = Oracle { v_max_mps: cfg.parse_value("oracle.v_max_mps")?, ..Oracle::default() };
        run_episode(&road, &mut OracleDriver { oracle, dt: ecfg.dt_s }, &ecfg)?
    } else {
        let model = load_checkpoint(&cfg.checkpoint_path())?;
        let renderer = Renderer::new(CameraModel::default());
        let smoother = Smoother::new(cfg.parse_value("smoothing.alpha")?, cfg.parse_value("smoothing.deadband_deg")?)?;
        let mut driver = ModelDriver::new(&model, &renderer, smoother, v_max)?;
        run_episode(&road, &mut driver as &mut dyn Driver, &ecfg)?
    };
    debug_assert_eq!(ecfg.dt_s, DT_S);
    let dir = cfg.path("drive_dir");
    create_dir(&dir)?;
    write_text(&dir.join("episode.csv"), &episode_csv(&report))?;
    write_text(&dir.join("episode.config"), &cfg.echo())?;
    write_text(&dir.join("summary.txt"), &format!("# config hash {}\n{}\n", cfg.hash(), summary_line(&report)))?;
    Ok(report)
}

pub struct GradCheckOutcome {
    pub reports: Vec<(ModelKind, GradCheckReport)>,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|(_, r)| r.passed())
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for (kind, r) in &self.reports {
            let _ = writeln!(
                s,
                "{}: {} (max rel err {:.3e}, tolerance {:.0e}, {} coordinates)",
                kind.as_str(),
                if r.passed() { "pass" } else { "FAIL" },
                r.max_rel_err(),
                r.tolerance,
                r.coords_checked()
            );
            for t in &r.tensors {
                let _ = writeln!(s, "  {:<14} {:>4} coords  max rel err {:.3e}", t.name, t.checked, t.max_rel_err);
            }
        }
        s
    }
}

/// Finite-difference check of all three toy networks, each recorded into a
/// graph from `make_graph` (which may carry injected faults in test builds).
pub fn gradcheck_with(cfg: &RunConfig, make_graph: &dyn Fn() -> Graph) -> Result<GradCheckOutcome> {
    let gc = GradCheckConfig {
        coords_per_tensor: cfg.parse_value("gradcheck.coords")?,
        tolerance: cfg.parse_value("gradcheck.tolerance")?,
        seed: cfg.parse_value("seed")?,
        ..GradCheckConfig::default()
    };
    let mut reports = Vec::new();
    for kind in [ModelKind::BaseSteering, ModelKind::SpeedCommand, ModelKind::MultiModal] {
        let mut model = Model::new(ModelConfig::toy(kind), gc.seed)?;
        reports.push((kind, grad_check_model_in(&mut model, &gc, make_graph())?));
    }
    Ok(GradCheckOutcome { reports })
}

pub fn gradcheck(cfg: &RunConfig) -> Result<GradCheckOutcome> {
    gradcheck_with(cfg, &Graph::new)
}
