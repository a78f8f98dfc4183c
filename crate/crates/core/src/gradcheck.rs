//! Central finite-difference verification of backward rules.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f64,
    /// Coordinates probed per tensor; tensors at most this large are probed exhaustively.
    pub coords_per_tensor: usize,
    /// Gradients below this magnitude on both routes are compared absolutely.
    pub abs_floor: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, coords_per_tensor: 8, abs_floor: 1e-7, tolerance: 1e-4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn coords_checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(abs_floor);
    (analytic - numeric).abs() / scale
}

fn pick_coords(len: usize, cfg: &GradCheckConfig, salt: u64) -> Vec<usize> {
    if len <= cfg.coords_per_tensor {
        return (0..len).collect();
    }
    let mut r = rng::stream(cfg.seed, &[salt]);
    (0..cfg.coords_per_tensor).map(|_| r.random_range(0..len)).collect()
}

/// Compares backward gradients of `loss` against central differences for
/// every parameter in `store` and every listed input node.
///
/// Parameters and inputs are restored bit-exactly afterwards, and the graph is
/// replayed so its values match the unperturbed state.
pub fn check_graph(
    graph: &mut Graph,
    store: &mut ParamStore,
    loss: NodeId,
    inputs: &[(&str, NodeId)],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    store.zero_grad();
    graph.backward(loss, store)?;
    let h = cfg.step;
    let mut tensors = Vec::new();
    // replay clears node gradients, so capture input gradients first
    let input_grads: Vec<Vec<f64>> = inputs
        .iter()
        .map(|&(_, node)| {
            graph.grad(node).map(|g| g.to_vec()).unwrap_or_else(|| alloc::vec![0.0; graph.value(node).len()])
        })
        .collect();

    for id in store.ids().collect::<Vec<_>>() {
        let analytic = store.get(id).grad().expect("backward fills every grad").to_vec();
        let coords = pick_coords(analytic.len(), cfg, id.index() as u64);
        let mut worst = 0.0f64;
        for &k in &coords {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + h;
            graph.replay(store)?;
            let up = graph.value(loss).item();
            store.get_mut(id).data_mut()[k] = orig - h;
            graph.replay(store)?;
            let down = graph.value(loss).item();
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[k], numeric, cfg.abs_floor));
        }
        tensors.push(TensorCheck { name: store.name(id).to_string(), checked: coords.len(), max_rel_err: worst });
    }

    for (n, &(label, node)) in inputs.iter().enumerate() {
        let value = graph.value(node).clone();
        let analytic = &input_grads[n];
        let coords = pick_coords(value.len(), cfg, 1_000_000 + n as u64);
        let mut worst = 0.0f64;
        for &k in &coords {
            let mut probe = value.clone();
            probe.data_mut()[k] += h;
            graph.set_input(node, probe.clone())?;
            graph.replay(store)?;
            let up = graph.value(loss).item();
            probe.data_mut()[k] = value.data()[k] - h;
            graph.set_input(node, probe)?;
            graph.replay(store)?;
            let down = graph.value(loss).item();
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[k], numeric, cfg.abs_floor));
        }
        graph.set_input(node, value)?;
        tensors.push(TensorCheck { name: label.to_string(), checked: coords.len(), max_rel_err: worst });
    }
    graph.replay(store)?;
    Ok(GradCheckReport { tensors, tolerance: cfg.tolerance })
}
