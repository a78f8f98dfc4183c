use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const ADAM: OptimizerKind = OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Keep parameters representable in 32 bits after every update, so a
    /// checkpoint written with 32-bit floats reloads bit-exactly.
    pub f32_params: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::ADAM, lr: 1e-4, f32_params: true }
    }
}

/// First/second moment state of Adam, one buffer per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer { config, state: OptimizerState::default() }
    }

    pub fn with_state(config: OptimizerConfig, state: OptimizerState) -> Self {
        Optimizer { config, state }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update using the gradients stored on `params`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        for id in params.ids() {
            if params.get(id).grad().is_none() {
                return Err(Error::MissingGrad(params.name(id).to_string()));
            }
        }
        let lr = self.config.lr;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for id in params.ids().collect::<Vec<_>>() {
                    let t = params.get_mut(id);
                    let g = t.grad().expect("checked above").to_vec();
                    for (w, gv) in t.data_mut().iter_mut().zip(g) {
                        *w -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.state.m.len() != params.len() {
                    self.state.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
                    self.state.v = self.state.m.clone();
                }
                self.state.step += 1;
                let t = self.state.step as i32;
                let bc1 = 1.0 - libm::pow(beta1, t as f64);
                let bc2 = 1.0 - libm::pow(beta2, t as f64);
                for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
                    let tensor = params.get_mut(id);
                    let g = tensor.grad().expect("checked above").to_vec();
                    let (m, v) = (&mut self.state.m[k], &mut self.state.v[k]);
                    if m.len() != g.len() {
                        return Err(Error::invalid("optimizer", "parameter shape changed between steps"));
                    }
                    for (((w, gv), mi), vi) in tensor.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gv;
                        *vi = beta2 * *vi + (1.0 - beta2) * gv * gv;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *w -= lr * m_hat / (libm::sqrt(v_hat) + eps);
                    }
                }
            }
        }
        if self.config.f32_params {
            params.round_to_f32();
        }
        Ok(())
    }
}
