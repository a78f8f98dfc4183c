//! Tape-recorded compute graph with reverse-mode differentiation.
//!
//! Every operation is appended to the tape in execution order, so the tape is
//! topologically sorted by construction and backward is a single reverse sweep.
//! Parameter values are copied onto the tape when first referenced; gradients
//! flow back into the [`ParamStore`] they came from.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Param,
    Conv2d,
    Affine,
    Relu,
    Concat,
    Reshape,
    Row,
    LstmStep,
    SoftmaxCrossEntropy,
    WeightedMae,
    Add,
    Scale,
    Sum,
}

/// Deliberately wrong backward rules, used to prove the gradient checker
/// catches broken derivatives.
#[cfg(any(test, feature = "fault-injection"))]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negates the convolution weight gradient.
    ConvWeightSignFlip,
    /// Drops the forget-gate path from the LSTM cell-state gradient.
    LstmForgetGateDropped,
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d { input: NodeId, weight: NodeId, bias: NodeId, stride: usize },
    Affine { input: NodeId, weight: NodeId, bias: NodeId },
    Relu(NodeId),
    Concat(Vec<NodeId>),
    Reshape { src: NodeId, dims: Vec<usize> },
    Row { src: NodeId, row: usize },
    LstmStep { x: NodeId, h: NodeId, c: NodeId, w_x: NodeId, w_h: NodeId, bias: NodeId },
    SoftmaxCrossEntropy { logits: NodeId, target: Vec<f64> },
    WeightedMae { pred: NodeId, target: Vec<f64>, weights: Vec<f64> },
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param(_) => OpKind::Param,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Affine { .. } => OpKind::Affine,
            Op::Relu(_) => OpKind::Relu,
            Op::Concat(_) => OpKind::Concat,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Row { .. } => OpKind::Row,
            Op::LstmStep { .. } => OpKind::LstmStep,
            Op::SoftmaxCrossEntropy { .. } => OpKind::SoftmaxCrossEntropy,
            Op::WeightedMae { .. } => OpKind::WeightedMae,
            Op::Add(..) => OpKind::Add,
            Op::Scale(..) => OpKind::Scale,
            Op::Sum(_) => OpKind::Sum,
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    /// Forward intermediates needed by backward (gate activations, softmax).
    saved: Vec<f64>,
}

/// Parameters of one LSTM cell, already placed on the graph.
#[derive(Clone, Copy, Debug)]
pub struct LstmNodes {
    pub w_x: NodeId,
    pub w_h: NodeId,
    pub bias: NodeId,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: BTreeMap<ParamId, NodeId>,
    #[cfg(any(test, feature = "fault-injection"))]
    fault: Option<Fault>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    #[cfg(any(test, feature = "fault-injection"))]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    #[cfg(any(test, feature = "fault-injection"))]
    fn has_fault(&self, fault: Fault) -> bool {
        self.fault == Some(fault)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    pub fn op_kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    /// The op kinds in recording order.
    pub fn ops(&self) -> impl Iterator<Item = OpKind> + '_ {
        self.nodes.iter().map(|n| n.op.kind())
    }

    /// Probabilities saved by a softmax cross-entropy node.
    pub fn softmax_probs(&self, id: NodeId) -> Option<&[f64]> {
        match self.nodes[id.0].op {
            Op::SoftmaxCrossEntropy { .. } => Some(&self.nodes[id.0].saved),
            _ => None,
        }
    }

    fn push(&mut self, op: Op, value: Tensor, saved: Vec<f64>) -> Result<NodeId> {
        if !value.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("forward"));
        }
        self.nodes.push(Node { op, value, saved });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn record(&mut self, op: Op) -> Result<NodeId> {
        let (value, saved) = self.compute(&op)?;
        self.push(op, value, saved)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        let mut value = value;
        value.clear_grad();
        self.nodes.push(Node { op: Op::Input, value, saved: Vec::new() });
        NodeId(self.nodes.len() - 1)
    }

    /// Replaces the value of an input node. Call [`Graph::replay`] afterwards
    /// to refresh downstream values.
    pub fn set_input(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Input) {
            return Err(Error::invalid("set_input", "node is not an input"));
        }
        if node.value.dims() != value.dims() {
            return Err(Error::shape(
                "set_input",
                format!("{:?} vs {:?}", node.value.dims(), value.dims()),
            ));
        }
        node.value = value;
        node.value.clear_grad();
        Ok(())
    }

    /// Places a parameter on the tape. Repeated requests for the same
    /// parameter return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        let mut value = store.get(id).clone();
        value.clear_grad();
        self.nodes.push(Node { op: Op::Param(id), value, saved: Vec::new() });
        let node = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, node);
        node
    }

    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, bias: NodeId, stride: usize) -> Result<NodeId> {
        self.record(Op::Conv2d { input, weight, bias, stride })
    }

    pub fn affine(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        self.record(Op::Affine { input, weight, bias })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.record(Op::Relu(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.record(Op::Concat(parts.to_vec()))
    }

    pub fn reshape(&mut self, src: NodeId, dims: &[usize]) -> Result<NodeId> {
        self.record(Op::Reshape { src, dims: dims.to_vec() })
    }

    pub fn flatten(&mut self, src: NodeId) -> Result<NodeId> {
        let n = self.value(src).len();
        self.reshape(src, &[n])
    }

    pub fn row(&mut self, src: NodeId, row: usize) -> Result<NodeId> {
        self.record(Op::Row { src, row })
    }

    /// One LSTM step. Returns `(h, c)`.
    pub fn lstm_step(&mut self, x: NodeId, h: NodeId, c: NodeId, p: LstmNodes) -> Result<(NodeId, NodeId)> {
        let packed = self.record(Op::LstmStep { x, h, c, w_x: p.w_x, w_h: p.w_h, bias: p.bias })?;
        let h = self.row(packed, 0)?;
        let c = self.row(packed, 1)?;
        Ok((h, c))
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: &[f64]) -> Result<NodeId> {
        self.record(Op::SoftmaxCrossEntropy { logits, target: target.to_vec() })
    }

    pub fn weighted_mae(&mut self, pred: NodeId, target: &[f64], weights: &[f64]) -> Result<NodeId> {
        self.record(Op::WeightedMae { pred, target: target.to_vec(), weights: weights.to_vec() })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.record(Op::Scale(a, factor))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum(a))
    }

    /// Re-executes the recorded tape, reloading parameters from `store` and
    /// keeping the current input values.
    pub fn replay(&mut self, store: &ParamStore) -> Result<()> {
        for i in 0..self.nodes.len() {
            match self.nodes[i].op.clone() {
                Op::Input => self.nodes[i].value.clear_grad(),
                Op::Param(id) => {
                    let mut v = store.get(id).clone();
                    v.clear_grad();
                    self.nodes[i].value = v;
                }
                op => {
                    let (value, saved) = self.compute(&op)?;
                    if !value.data().iter().all(|v| v.is_finite()) {
                        return Err(Error::NonFinite("replay"));
                    }
                    self.nodes[i].value = value;
                    self.nodes[i].saved = saved;
                }
            }
        }
        Ok(())
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    fn dims(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.dims()
    }

    fn check_id(&self, id: NodeId, op: &'static str) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::invalid(op, format!("unknown node {}", id.0)));
        }
        Ok(())
    }

    fn compute(&self, op: &Op) -> Result<(Tensor, Vec<f64>)> {
        match op {
            Op::Input | Op::Param(_) => unreachable!("leaves are not computed"),
            &Op::Conv2d { input, weight, bias, stride } => {
                for id in [input, weight, bias] {
                    self.check_id(id, "conv2d")?;
                }
                let geom = conv_geometry(self.dims(input), self.dims(weight), self.dims(bias), stride)?;
                let mut out = vec![0.0; geom.out_len()];
                kernels::conv2d_forward(&geom, self.data(input), self.data(weight), self.data(bias), &mut out);
                Ok((Tensor::new(&[geom.out_h, geom.out_w, geom.c_out], out)?, Vec::new()))
            }
            &Op::Affine { input, weight, bias } => {
                for id in [input, weight, bias] {
                    self.check_id(id, "affine")?;
                }
                let (n, m) = affine_geometry(self.value(input).len(), self.dims(weight), self.dims(bias))?;
                let mut out = self.data(bias).to_vec();
                kernels::matvec_acc(self.data(input), self.data(weight), n, m, &mut out);
                Ok((Tensor::new(&[m], out)?, Vec::new()))
            }
            &Op::Relu(x) => {
                self.check_id(x, "relu")?;
                let data = self.data(x).iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                Ok((Tensor::new(self.dims(x), data)?, Vec::new()))
            }
            Op::Concat(parts) => {
                if parts.is_empty() {
                    return Err(Error::invalid("concat", "no inputs"));
                }
                let mut data = Vec::new();
                for &p in parts {
                    self.check_id(p, "concat")?;
                    data.extend_from_slice(self.data(p));
                }
                let n = data.len();
                Ok((Tensor::new(&[n], data)?, Vec::new()))
            }
            Op::Reshape { src, dims } => {
                self.check_id(*src, "reshape")?;
                Ok((Tensor::new(dims, self.data(*src).to_vec())?, Vec::new()))
            }
            &Op::Row { src, row } => {
                self.check_id(src, "row")?;
                let d = self.dims(src);
                if d.len() != 2 || row >= d[0] {
                    return Err(Error::shape("row", format!("row {row} of dims {d:?}")));
                }
                let w = d[1];
                Ok((Tensor::new(&[w], self.data(src)[row * w..(row + 1) * w].to_vec())?, Vec::new()))
            }
            &Op::LstmStep { x, h, c, w_x, w_h, bias } => {
                for id in [x, h, c, w_x, w_h, bias] {
                    self.check_id(id, "lstm_step")?;
                }
                let g = lstm_geometry(
                    self.value(x).len(),
                    self.dims(h),
                    self.dims(c),
                    self.dims(w_x),
                    self.dims(w_h),
                    self.dims(bias),
                )?;
                let u = g.hidden;
                let mut z = self.data(bias).to_vec();
                kernels::matvec_acc(self.data(x), self.data(w_x), g.input, 4 * u, &mut z);
                kernels::matvec_acc(self.data(h), self.data(w_h), u, 4 * u, &mut z);
                // saved = [i f g o | tanh(c')]
                let mut saved = vec![0.0; 5 * u];
                let mut out = vec![0.0; 2 * u];
                let c_prev = self.data(c);
                for j in 0..u {
                    let i_g = sigmoid(z[j]);
                    let f_g = sigmoid(z[u + j]);
                    let g_g = libm::tanh(z[2 * u + j]);
                    let o_g = sigmoid(z[3 * u + j]);
                    let c_new = f_g * c_prev[j] + i_g * g_g;
                    let tc = libm::tanh(c_new);
                    saved[j] = i_g;
                    saved[u + j] = f_g;
                    saved[2 * u + j] = g_g;
                    saved[3 * u + j] = o_g;
                    saved[4 * u + j] = tc;
                    out[j] = o_g * tc;
                    out[u + j] = c_new;
                }
                Ok((Tensor::new(&[2, u], out)?, saved))
            }
            Op::SoftmaxCrossEntropy { logits, target } => {
                self.check_id(*logits, "softmax_cross_entropy")?;
                let z = self.data(*logits);
                if z.len() != target.len() {
                    return Err(Error::shape(
                        "softmax_cross_entropy",
                        format!("logits length {} vs target length {}", z.len(), target.len()),
                    ));
                }
                let class = one_hot_class(target)?;
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = z.iter().map(|&v| libm::exp(v - max)).sum();
                let log_denom = libm::log(denom);
                let probs: Vec<f64> = z.iter().map(|&v| libm::exp(v - max) / denom).collect();
                let loss = (max + log_denom) - z[class];
                Ok((Tensor::scalar(loss.max(0.0)), probs))
            }
            Op::WeightedMae { pred, target, weights } => {
                self.check_id(*pred, "weighted_mae")?;
                let p = self.data(*pred);
                if p.len() != target.len() || p.len() != weights.len() {
                    return Err(Error::shape(
                        "weighted_mae",
                        format!(
                            "pred length {} vs target length {} vs weights length {}",
                            p.len(),
                            target.len(),
                            weights.len()
                        ),
                    ));
                }
                if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
                    return Err(Error::invalid("weighted_mae", format!("weight {w} is not positive")));
                }
                let total: f64 = weights.iter().sum();
                let num: f64 = p.iter().zip(target).zip(weights).map(|((&p, &t), &w)| w * (p - t).abs()).sum();
                Ok((Tensor::scalar(num / total), Vec::new()))
            }
            &Op::Add(a, b) => {
                self.check_id(a, "add")?;
                self.check_id(b, "add")?;
                if self.dims(a) != self.dims(b) {
                    return Err(Error::shape("add", format!("{:?} vs {:?}", self.dims(a), self.dims(b))));
                }
                let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
                Ok((Tensor::new(self.dims(a), data)?, Vec::new()))
            }
            &Op::Scale(a, factor) => {
                self.check_id(a, "scale")?;
                let data = self.data(a).iter().map(|x| x * factor).collect();
                Ok((Tensor::new(self.dims(a), data)?, Vec::new()))
            }
            &Op::Sum(a) => {
                self.check_id(a, "sum")?;
                Ok((Tensor::scalar(self.data(a).iter().sum()), Vec::new()))
            }
        }
    }

    /// Reverse sweep from the scalar `loss`. Node gradients are left on the
    /// tape (see [`Graph::grad`]); parameter gradients are added into `store`.
    /// Every parameter of `store` ends up with a gradient buffer, zero-filled
    /// where the loss does not reach it.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        self.check_id(loss, "backward")?;
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::NonScalarLoss(self.nodes[loss.0].value.dims().to_vec()));
        }
        for n in &mut self.nodes {
            n.value.clear_grad();
        }
        self.nodes[loss.0].value.set_grad(vec![1.0])?;

        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].value.grad().map(|g| g.to_vec()) else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            self.backprop(i, &op, &g)?;
        }

        for id in store.ids().collect::<Vec<_>>() {
            let acc = store.get_mut(id).grad_or_zeros();
            if let Some(&node) = self.param_nodes.get(&id) {
                if let Some(g) = self.nodes[node.0].value.grad() {
                    if acc.len() != g.len() {
                        return Err(Error::shape("backward", "parameter changed shape since recording"));
                    }
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            if !acc.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("backward"));
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, contrib: &[f64]) {
        let g = self.nodes[id.0].value.grad_or_zeros();
        for (a, &v) in g.iter_mut().zip(contrib) {
            *a += v;
        }
    }

    fn backprop(&mut self, index: usize, op: &Op, g: &[f64]) -> Result<()> {
        match *op {
            Op::Input | Op::Param(_) => {}
            Op::Conv2d { input, weight, bias, stride } => {
                let geom = conv_geometry(self.dims(input), self.dims(weight), self.dims(bias), stride)?;
                let mut d_in = vec![0.0; self.value(input).len()];
                let mut d_w = vec![0.0; self.value(weight).len()];
                let mut d_b = vec![0.0; geom.c_out];
                kernels::conv2d_backward(
                    &geom,
                    self.data(input),
                    self.data(weight),
                    g,
                    &mut d_in,
                    &mut d_w,
                    &mut d_b,
                );
                #[cfg(any(test, feature = "fault-injection"))]
                if self.has_fault(Fault::ConvWeightSignFlip) {
                    d_w.iter_mut().for_each(|v| *v = -*v);
                }
                self.accumulate(input, &d_in);
                self.accumulate(weight, &d_w);
                self.accumulate(bias, &d_b);
            }
            Op::Affine { input, weight, bias } => {
                let (n, m) = affine_geometry(self.value(input).len(), self.dims(weight), self.dims(bias))?;
                let mut d_in = vec![0.0; n];
                let mut d_w = vec![0.0; n * m];
                kernels::matvec_backward(self.data(input), self.data(weight), g, n, m, &mut d_in, &mut d_w);
                self.accumulate(input, &d_in);
                self.accumulate(weight, &d_w);
                self.accumulate(bias, g);
            }
            Op::Relu(x) => {
                let d: Vec<f64> = self.data(x).iter().zip(g).map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 }).collect();
                self.accumulate(x, &d);
            }
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    let slice = g[offset..offset + n].to_vec();
                    self.accumulate(p, &slice);
                    offset += n;
                }
            }
            Op::Reshape { src, .. } => self.accumulate(src, g),
            Op::Row { src, row } => {
                let w = g.len();
                let mut d = vec![0.0; self.value(src).len()];
                d[row * w..(row + 1) * w].copy_from_slice(g);
                self.accumulate(src, &d);
            }
            Op::LstmStep { x, h, c, w_x, w_h, bias } => {
                let u = self.dims(h)[0];
                let d = self.value(x).len();
                let saved = &self.nodes[index].saved;
                let c_prev = self.data(c);
                let (dh_out, dc_out) = g.split_at(u);
                let mut dz = vec![0.0; 4 * u];
                let mut dc_prev = vec![0.0; u];
                for j in 0..u {
                    let (i_g, f_g, g_g, o_g, tc) =
                        (saved[j], saved[u + j], saved[2 * u + j], saved[3 * u + j], saved[4 * u + j]);
                    let dc = dc_out[j] + dh_out[j] * o_g * (1.0 - tc * tc);
                    let d_o = dh_out[j] * tc;
                    let d_i = dc * g_g;
                    let d_g = dc * i_g;
                    let d_f = dc * c_prev[j];
                    dc_prev[j] = dc * f_g;
                    dz[j] = d_i * i_g * (1.0 - i_g);
                    dz[u + j] = d_f * f_g * (1.0 - f_g);
                    dz[2 * u + j] = d_g * (1.0 - g_g * g_g);
                    dz[3 * u + j] = d_o * o_g * (1.0 - o_g);
                }
                #[cfg(any(test, feature = "fault-injection"))]
                if self.has_fault(Fault::LstmForgetGateDropped) {
                    dc_prev.iter_mut().for_each(|v| *v = 0.0);
                }
                let mut dx = vec![0.0; d];
                let mut dwx = vec![0.0; d * 4 * u];
                kernels::matvec_backward(self.data(x), self.data(w_x), &dz, d, 4 * u, &mut dx, &mut dwx);
                let mut dh = vec![0.0; u];
                let mut dwh = vec![0.0; u * 4 * u];
                kernels::matvec_backward(self.data(h), self.data(w_h), &dz, u, 4 * u, &mut dh, &mut dwh);
                self.accumulate(x, &dx);
                self.accumulate(w_x, &dwx);
                self.accumulate(h, &dh);
                self.accumulate(w_h, &dwh);
                self.accumulate(c, &dc_prev);
                self.accumulate(bias, &dz);
            }
            Op::SoftmaxCrossEntropy { logits, ref target } => {
                let probs = &self.nodes[index].saved;
                let d: Vec<f64> = probs.iter().zip(target).map(|(p, t)| (p - t) * g[0]).collect();
                self.accumulate(logits, &d);
            }
            Op::WeightedMae { pred, ref target, ref weights } => {
                let total: f64 = weights.iter().sum();
                let d: Vec<f64> = self
                    .data(pred)
                    .iter()
                    .zip(target)
                    .zip(weights)
                    .map(|((&p, &t), &w)| w * sign(p - t) / total * g[0])
                    .collect();
                self.accumulate(pred, &d);
            }
            Op::Add(a, b) => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            Op::Scale(a, factor) => {
                let d: Vec<f64> = g.iter().map(|v| v * factor).collect();
                self.accumulate(a, &d);
            }
            Op::Sum(a) => {
                let d = vec![g[0]; self.value(a).len()];
                self.accumulate(a, &d);
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn one_hot_class(target: &[f64]) -> Result<usize> {
    let mut class = None;
    for (i, &t) in target.iter().enumerate() {
        if t == 1.0 {
            if class.is_some() {
                return Err(Error::invalid("softmax_cross_entropy", "target has more than one hot entry"));
            }
            class = Some(i);
        } else if t != 0.0 {
            return Err(Error::invalid("softmax_cross_entropy", format!("target entry {t} is not 0 or 1")));
        }
    }
    class.ok_or_else(|| Error::invalid("softmax_cross_entropy", "target has no hot entry"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub c_in: usize,
    pub kernel: usize,
    pub c_out: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w * self.c_out
    }
}

pub(crate) fn conv_geometry(input: &[usize], weight: &[usize], bias: &[usize], stride: usize) -> Result<ConvGeometry> {
    if input.len() != 3 {
        return Err(Error::shape("conv2d", format!("input must be H x W x C, got dims {input:?}")));
    }
    if weight.len() != 4 || weight[0] != weight[1] {
        return Err(Error::shape("conv2d", format!("weights must be k x k x Cin x Cout, got dims {weight:?}")));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d", "stride must be at least 1"));
    }
    let (in_h, in_w, c_in) = (input[0], input[1], input[2]);
    let (kernel, c_out) = (weight[0], weight[3]);
    if weight[2] != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("input channels {c_in} vs weight input channels {}", weight[2]),
        ));
    }
    if bias != [c_out] {
        return Err(Error::shape("conv2d", format!("bias dims {bias:?} vs output channels {c_out}")));
    }
    if kernel > in_h || kernel > in_w {
        return Err(Error::shape("conv2d", format!("kernel {kernel} exceeds input {in_h} x {in_w}")));
    }
    Ok(ConvGeometry {
        in_h,
        in_w,
        c_in,
        kernel,
        c_out,
        stride,
        out_h: (in_h - kernel) / stride + 1,
        out_w: (in_w - kernel) / stride + 1,
    })
}

fn affine_geometry(input_len: usize, weight: &[usize], bias: &[usize]) -> Result<(usize, usize)> {
    if weight.len() != 2 {
        return Err(Error::shape("affine", format!("weights must be n x m, got dims {weight:?}")));
    }
    if weight[0] != input_len {
        return Err(Error::shape("affine", format!("input length {input_len} vs weight rows {}", weight[0])));
    }
    if bias != [weight[1]] {
        return Err(Error::shape("affine", format!("bias dims {bias:?} vs weight columns {}", weight[1])));
    }
    Ok((weight[0], weight[1]))
}

struct LstmGeometry {
    input: usize,
    hidden: usize,
}

fn lstm_geometry(
    x_len: usize,
    h: &[usize],
    c: &[usize],
    w_x: &[usize],
    w_h: &[usize],
    bias: &[usize],
) -> Result<LstmGeometry> {
    if h.len() != 1 || h != c {
        return Err(Error::shape("lstm_step", format!("hidden dims {h:?} vs cell dims {c:?}")));
    }
    let u = h[0];
    if w_x != [x_len, 4 * u] {
        return Err(Error::shape("lstm_step", format!("input weights {w_x:?} vs expected [{x_len}, {}]", 4 * u)));
    }
    if w_h != [u, 4 * u] {
        return Err(Error::shape("lstm_step", format!("recurrent weights {w_h:?} vs expected [{u}, {}]", 4 * u)));
    }
    if bias != [4 * u] {
        return Err(Error::shape("lstm_step", format!("bias {bias:?} vs expected [{}]", 4 * u)));
    }
    Ok(LstmGeometry { input: x_len, hidden: u })
}
