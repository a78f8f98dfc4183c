use alloc::vec::Vec;

use crate::data::SpeedCommand;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::models::config::{ModelConfig, ModelKind};
use crate::models::net::{HeadNodes, Prediction};

/// Training target for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub steering_deg: f64,
    /// Next-frame speed, required by the multi-modal model.
    pub speed_mps: Option<f64>,
    /// Required by the command model.
    pub command: Option<SpeedCommand>,
}

/// Per-sample angle loss weight with the default slope (5°) and cap (4).
pub fn sample_weight(steering_deg: f64) -> f64 {
    sample_weight_with(steering_deg, 5.0, 4.0)
}

pub fn sample_weight_with(steering_deg: f64, slope_deg: f64, cap: f64) -> f64 {
    (1.0 + libm::fabs(steering_deg) / slope_deg).min(cap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossNodes {
    pub total: NodeId,
    pub angle: NodeId,
    pub second: Option<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub angle: f64,
    pub second: Option<f64>,
}

fn check_targets(kind: ModelKind, n_pred: usize, targets: &[Target]) -> Result<()> {
    if n_pred != targets.len() {
        return Err(Error::invalid(
            "composite_loss",
            alloc::format!("{n_pred} predictions vs {} targets", targets.len()),
        ));
    }
    if targets.is_empty() {
        return Err(Error::EmptySequence);
    }
    let ok = match kind {
        ModelKind::BaseSteering => true,
        ModelKind::SpeedCommand => targets.iter().all(|t| t.command.is_some()),
        ModelKind::MultiModal => targets.iter().all(|t| t.speed_mps.is_some()),
    };
    if !ok {
        return Err(Error::invalid(
            "composite_loss",
            alloc::format!("targets lack the second head of model kind `{}`", kind.as_str()),
        ));
    }
    Ok(())
}

/// Records `L_angle + λ·L_second` over a batch of forward passes.
///
/// The angle term is the weighted MAE over the batch, the command term the
/// mean cross-entropy and the speed term the unweighted MAE.
pub fn composite_loss_nodes(
    g: &mut Graph,
    config: &ModelConfig,
    heads: &[HeadNodes],
    targets: &[Target],
) -> Result<LossNodes> {
    check_targets(config.kind, heads.len(), targets)?;
    let steer: Vec<NodeId> = heads.iter().map(|h| h.steering).collect();
    let steer = g.concat(&steer)?;
    let angle_t: Vec<f64> = targets.iter().map(|t| t.steering_deg).collect();
    let w: Vec<f64> = targets
        .iter()
        .map(|t| sample_weight_with(t.steering_deg, config.angle_weight_slope_deg, config.angle_weight_cap))
        .collect();
    let angle = g.weighted_mae(steer, &angle_t, &w)?;

    let second = match config.kind {
        ModelKind::BaseSteering => None,
        ModelKind::SpeedCommand => {
            let mut acc = None;
            for (h, t) in heads.iter().zip(targets) {
                let logits = h.command.ok_or_else(|| Error::invalid("composite_loss", "missing command head"))?;
                let ce = g.softmax_cross_entropy(logits, &t.command.expect("checked").one_hot())?;
                acc = Some(match acc {
                    None => ce,
                    Some(a) => g.add(a, ce)?,
                });
            }
            Some(g.scale(acc.expect("non-empty"), 1.0 / heads.len() as f64)?)
        }
        ModelKind::MultiModal => {
            let speeds = heads
                .iter()
                .map(|h| h.speed.ok_or_else(|| Error::invalid("composite_loss", "missing speed head")))
                .collect::<Result<Vec<_>>>()?;
            let speeds = g.concat(&speeds)?;
            let t: Vec<f64> = targets.iter().map(|t| t.speed_mps.expect("checked")).collect();
            let ones = alloc::vec![1.0; t.len()];
            Some(g.weighted_mae(speeds, &t, &ones)?)
        }
    };

    let total = match second {
        Some(s) => {
            let s = g.scale(s, config.task_weight)?;
            g.add(angle, s)?
        }
        None => angle,
    };
    Ok(LossNodes { total, angle, second })
}

/// Evaluates the composite loss on finished predictions with the given task weight.
pub fn composite_loss(config: &ModelConfig, preds: &[Prediction], targets: &[Target], lambda: f64) -> Result<LossValue> {
    check_targets(config.kind, preds.len(), targets)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        let w = sample_weight_with(t.steering_deg, config.angle_weight_slope_deg, config.angle_weight_cap);
        num += w * libm::fabs(p.steering_deg - t.steering_deg);
        den += w;
    }
    let angle = num / den;
    let n = preds.len() as f64;
    let second = match config.kind {
        ModelKind::BaseSteering => None,
        ModelKind::SpeedCommand => {
            let mut sum = 0.0;
            for (p, t) in preds.iter().zip(targets) {
                let probs = p
                    .command_probs()
                    .ok_or_else(|| Error::invalid("composite_loss", "prediction lacks command logits"))?;
                sum -= libm::log(probs[t.command.expect("checked").index()]);
            }
            Some(sum / n)
        }
        ModelKind::MultiModal => {
            let mut sum = 0.0;
            for (p, t) in preds.iter().zip(targets) {
                let v = p.speed_mps.ok_or_else(|| Error::invalid("composite_loss", "prediction lacks speed"))?;
                sum += libm::fabs(v - t.speed_mps.expect("checked"));
            }
            Some(sum / n)
        }
    };
    Ok(LossValue { total: angle + lambda * second.unwrap_or(0.0), angle, second })
}
