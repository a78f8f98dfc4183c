//! The three steering networks, their losses and checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod net;

use alloc::vec::Vec;

use rand::Rng as _;

pub use checkpoint::ConfigOverride;
pub use config::{ConvSpec, ModelConfig, ModelKind};
pub use loss::{composite_loss, composite_loss_nodes, sample_weight, sample_weight_with, LossNodes, LossValue, Target};
pub use net::{read_prediction, HeadNodes, Model, ModelInput, Prediction};

use crate::error::Result;
use crate::gradcheck::{check_graph, GradCheckConfig, GradCheckReport};
use crate::graph::Graph;
use crate::rng;
use crate::tensor::Tensor;

/// Gradient check of a whole model on random inputs.
///
/// The loss is a fixed random linear readout of every head, which keeps the
/// check free of the kinks an absolute-error loss would add.
pub fn grad_check_model(model: &mut Model, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    grad_check_model_in(model, cfg, Graph::new())
}

/// As [`grad_check_model`] but records into `graph`, which may carry injected faults.
pub fn grad_check_model_in(model: &mut Model, cfg: &GradCheckConfig, mut graph: Graph) -> Result<GradCheckReport> {
    let c = model.config().clone();
    let mut r = rng::stream(cfg.seed, &[0x6d6f_6465_6c]);
    let side = c.input_side;
    let mut image = || Tensor::new(&[side, side, 3], (0..side * side * 3).map(|_| r.random_range(0.0..1.0)).collect());
    let frames = (0..c.seq_len.max(1)).map(|_| image()).collect::<Result<Vec<_>>>()?;
    let mut r = rng::stream(cfg.seed, &[1]);
    let speeds: Vec<f64> = (0..c.speed_window).map(|_| r.random_range(2.0..25.0)).collect();
    let input = match c.kind {
        ModelKind::BaseSteering => ModelInput::Frame(&frames[0]),
        ModelKind::SpeedCommand => ModelInput::Sequence(&frames),
        ModelKind::MultiModal => ModelInput::FrameAndSpeeds(&frames[0], &speeds),
    };
    let heads = model.forward(&mut graph, input)?;
    let mut terms = Vec::new();
    for node in [Some(heads.steering), heads.speed, heads.command].into_iter().flatten() {
        let n = graph.value(node).len();
        let w = graph.input(Tensor::new(&[n, 1], (0..n).map(|_| r.random_range(-1.0..1.0)).collect())?);
        let b = graph.input(Tensor::zeros(&[1]));
        let y = graph.affine(node, w, b)?;
        terms.push(y);
    }
    let joined = graph.concat(&terms)?;
    let loss = graph.sum(joined)?;
    check_graph(&mut graph, model.params_mut(), loss, &[], cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Fault;

    #[test]
    fn corrupted_backward_rules_are_caught() {
        let cfg = GradCheckConfig { coords_per_tensor: 20, tolerance: 1e-3, seed: 4, ..Default::default() };
        for (kind, fault) in [
            (ModelKind::BaseSteering, Fault::ConvWeightSignFlip),
            (ModelKind::SpeedCommand, Fault::LstmForgetGateDropped),
        ] {
            let mut m = Model::new(ModelConfig::toy(kind), 8).unwrap();
            let mut g = Graph::new();
            g.inject_fault(fault);
            let report = grad_check_model_in(&mut m, &cfg, g).unwrap();
            assert!(!report.passed(), "{fault:?} went unnoticed: {}", report.max_rel_err());
        }
    }
}
