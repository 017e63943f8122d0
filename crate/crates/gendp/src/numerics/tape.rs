//! The recording tape: eager forward evaluation plus reverse-mode backward.
//!
//! Nodes are appended in construction order, so the record is already
//! topologically sorted; `backward` walks it once in reverse. Intermediate
//! gradients live in per-call scratch buffers — only *parameter leaves*
//! accumulate into the caller's [`GradAccum`], which is what makes repeated
//! backward calls additive (gradient of a sum equals the sum of gradients).

use std::sync::Arc;

use super::tensor::{GradAccum, ParamId, ParamSet};
use super::NumericsError;

/// Handle for a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

/// Probability floor used by the log-loss primitives.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Input,
    MatVec { w: NodeId, x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    OneMinus { x: NodeId },
    Scale { x: NodeId, c: f64 },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Softmax { x: NodeId },
    Concat { parts: Vec<NodeId> },
    Dot { a: NodeId, b: NodeId },
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    EmbedRow { table: NodeId, row: usize },
    CrossEntropy { dist: NodeId, target: usize },
    Bce { prob: NodeId, label: f64 },
    SumVec { x: NodeId },
}

#[derive(Debug)]
enum Storage {
    Owned(Vec<f64>),
    Shared(Arc<Vec<f64>>),
}

impl Storage {
    fn as_slice(&self) -> &[f64] {
        match self {
            Storage::Owned(v) => v,
            Storage::Shared(a) => a,
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Storage,
    requires_grad: bool,
}

/// Recorded forward computation over one or more turns.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: Vec<(ParamId, NodeId)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        self.nodes[id.index()].data.as_slice()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.index()].shape
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Storage, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            op,
            shape,
            data,
            requires_grad,
        });
        id
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.index()].requires_grad
    }

    /// Records a parameter leaf, sharing its buffer. Repeated requests for
    /// the same parameter return the same node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        if let Some(&(_, nid)) = self.param_nodes.iter().find(|(pid, _)| *pid == id) {
            return nid;
        }
        let e = params.entry(id);
        let nid = self.push(
            Op::Param(id),
            e.shape().to_vec(),
            Storage::Shared(params.data_arc(id)),
            e.trainable(),
        );
        self.param_nodes.push((id, nid));
        nid
    }

    /// Records a constant input (no gradient flows into it).
    pub fn input(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<NodeId, NumericsError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(NumericsError::ShapeMismatch {
                op: "input",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(Op::Input, shape, Storage::Owned(data), false))
    }

    pub fn zeros(&mut self, len: usize) -> Result<NodeId, NumericsError> {
        self.input(vec![len], vec![0.0; len])
    }

    /// Matrix `[m × n]` times vector `[n]`.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, NumericsError> {
        let (ws, xs) = (self.shape(w).to_vec(), self.shape(x).to_vec());
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "matvec",
                lhs: ws,
                rhs: xs,
            });
        }
        let (m, n) = (ws[0], ws[1]);
        let wd = self.value(w);
        let xd = self.value(x);
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &wd[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * xd[j];
            }
            out[i] = acc;
        }
        let rg = self.rg(w) || self.rg(x);
        Ok(self.push(Op::MatVec { w, x }, vec![m], Storage::Owned(out), rg))
    }

    fn elementwise_pair(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(NumericsError::ShapeMismatch {
                op: op_name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(op, shape, Storage::Owned(out), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.elementwise_pair("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.elementwise_pair("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.elementwise_pair("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|&v| 1.0 - v).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(Op::OneMinus { x }, shape, Storage::Owned(out), rg)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|&v| c * v).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(Op::Scale { x, c }, shape, Storage::Owned(out), rg)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self
            .value(x)
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(Op::Sigmoid { x }, shape, Storage::Owned(out), rg)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|&v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(Op::Tanh { x }, shape, Storage::Owned(out), rg)
    }

    /// Numerically stable softmax over a vector (max-subtraction).
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let xd = self.value(x);
        if xd.is_empty() {
            return Err(NumericsError::InvalidArgument(
                "softmax over empty vector".into(),
            ));
        }
        if xd.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("softmax input"));
        }
        let m = xd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xd.iter().map(|&v| (v - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let out: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Op::Softmax { x }, shape, Storage::Owned(out), rg))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidArgument("concat of nothing".into()));
        }
        let mut out = Vec::new();
        let mut rg = false;
        for &p in parts {
            out.extend_from_slice(self.value(p));
            rg |= self.rg(p);
        }
        let len = out.len();
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            vec![len],
            Storage::Owned(out),
            rg,
        ))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        if self.shape(a) != self.shape(b) || self.shape(a).len() != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "dot",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let v: f64 = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Dot { a, b }, vec![1], Storage::Owned(vec![v]), rg))
    }

    /// `Σ_j weights[j] · items[j]` — the attention mixing step.
    pub fn weighted_sum(
        &mut self,
        weights: NodeId,
        items: &[NodeId],
    ) -> Result<NodeId, NumericsError> {
        let k = self.shape(weights).first().copied().unwrap_or(0);
        if items.is_empty() || k != items.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "weighted_sum",
                lhs: vec![k],
                rhs: vec![items.len()],
            });
        }
        let d = self.value(items[0]).len();
        for &it in items {
            if self.value(it).len() != d {
                return Err(NumericsError::ShapeMismatch {
                    op: "weighted_sum",
                    lhs: vec![d],
                    rhs: self.shape(it).to_vec(),
                });
            }
        }
        let mut out = vec![0.0; d];
        let wd = self.value(weights).to_vec();
        let mut rg = self.rg(weights);
        for (j, &it) in items.iter().enumerate() {
            let iv = self.value(it);
            for (o, &v) in out.iter_mut().zip(iv) {
                *o += wd[j] * v;
            }
            rg |= self.rg(it);
        }
        Ok(self.push(
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
            vec![d],
            Storage::Owned(out),
            rg,
        ))
    }

    /// Copies row `row` out of a `[V × d]` table; backward scatters into
    /// that row only.
    pub fn embed_row(&mut self, table: NodeId, row: usize) -> Result<NodeId, NumericsError> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "embed_row",
                lhs: ts,
                rhs: vec![],
            });
        }
        let (v, d) = (ts[0], ts[1]);
        if row >= v {
            return Err(NumericsError::IndexOutOfBounds {
                what: "embedding row",
                index: row,
                size: v,
            });
        }
        let out = self.value(table)[row * d..(row + 1) * d].to_vec();
        let rg = self.rg(table);
        Ok(self.push(Op::EmbedRow { table, row }, vec![d], Storage::Owned(out), rg))
    }

    /// `−ln(dist[target])` with the probability floored at [`PROB_FLOOR`].
    pub fn cross_entropy(&mut self, dist: NodeId, target: usize) -> Result<NodeId, NumericsError> {
        let dd = self.value(dist);
        if target >= dd.len() {
            return Err(NumericsError::IndexOutOfBounds {
                what: "cross-entropy target",
                index: target,
                size: dd.len(),
            });
        }
        let p = dd[target].max(PROB_FLOOR);
        let out = -p.ln();
        let rg = self.rg(dist);
        Ok(self.push(
            Op::CrossEntropy { dist, target },
            vec![1],
            Storage::Owned(vec![out]),
            rg,
        ))
    }

    /// Binary cross-entropy of a scalar probability against a 0/1 label.
    pub fn bce(&mut self, prob: NodeId, label: f64) -> Result<NodeId, NumericsError> {
        if self.value(prob).len() != 1 {
            return Err(NumericsError::NotScalar {
                op: "bce",
                shape: self.shape(prob).to_vec(),
            });
        }
        let p = self.value(prob)[0].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        let out = -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
        let rg = self.rg(prob);
        Ok(self.push(
            Op::Bce { prob, label },
            vec![1],
            Storage::Owned(vec![out]),
            rg,
        ))
    }

    pub fn sum_vec(&mut self, x: NodeId) -> NodeId {
        let v: f64 = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(Op::SumVec { x }, vec![1], Storage::Owned(vec![v]), rg)
    }

    /// Reverse pass from a scalar `loss`. Parameter-leaf gradients are
    /// *added* into `accum`; everything else uses per-call scratch.
    pub fn backward(&self, loss: NodeId, accum: &mut GradAccum) -> Result<(), NumericsError> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NotScalar {
                op: "backward",
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        scratch[loss.index()] = Some(vec![1.0]);

        for idx in (0..=loss.index()).rev() {
            if scratch[idx].is_none() || !self.nodes[idx].requires_grad {
                continue;
            }
            let g = scratch[idx].take().unwrap();
            // Split borrows: the node being differentiated vs. scratch.
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param(pid) => {
                    accum.add(*pid, g.len(), &g);
                }
                Op::Input => {}
                Op::MatVec { w, x } => {
                    let (w, x) = (*w, *x);
                    let n = self.shape(x)[0];
                    let m = g.len();
                    if self.rg(w) {
                        let xd = self.value(x);
                        let buf = Self::slot(&mut scratch, w, m * n);
                        for i in 0..m {
                            let gi = g[i];
                            if gi != 0.0 {
                                let row = &mut buf[i * n..(i + 1) * n];
                                for j in 0..n {
                                    row[j] += gi * xd[j];
                                }
                            }
                        }
                    }
                    if self.rg(x) {
                        let wd = self.nodes[w.index()].data.as_slice();
                        let buf = Self::slot(&mut scratch, x, n);
                        for i in 0..m {
                            let gi = g[i];
                            if gi != 0.0 {
                                let row = &wd[i * n..(i + 1) * n];
                                for j in 0..n {
                                    buf[j] += gi * row[j];
                                }
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        Self::axpy(&mut scratch, a, 1.0, &g);
                    }
                    if self.rg(b) {
                        Self::axpy(&mut scratch, b, 1.0, &g);
                    }
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        Self::axpy(&mut scratch, a, 1.0, &g);
                    }
                    if self.rg(b) {
                        Self::axpy(&mut scratch, b, -1.0, &g);
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let bv = self.value(b).to_vec();
                        let buf = Self::slot(&mut scratch, a, g.len());
                        for i in 0..g.len() {
                            buf[i] += g[i] * bv[i];
                        }
                    }
                    if self.rg(b) {
                        let av = self.value(a).to_vec();
                        let buf = Self::slot(&mut scratch, b, g.len());
                        for i in 0..g.len() {
                            buf[i] += g[i] * av[i];
                        }
                    }
                }
                Op::OneMinus { x } => {
                    let x = *x;
                    if self.rg(x) {
                        Self::axpy(&mut scratch, x, -1.0, &g);
                    }
                }
                Op::Scale { x, c } => {
                    let (x, c) = (*x, *c);
                    if self.rg(x) {
                        Self::axpy(&mut scratch, x, c, &g);
                    }
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    if self.rg(x) {
                        let y = node.data.as_slice().to_vec();
                        let buf = Self::slot(&mut scratch, x, g.len());
                        for i in 0..g.len() {
                            buf[i] += g[i] * y[i] * (1.0 - y[i]);
                        }
                    }
                }
                Op::Tanh { x } => {
                    let x = *x;
                    if self.rg(x) {
                        let y = node.data.as_slice().to_vec();
                        let buf = Self::slot(&mut scratch, x, g.len());
                        for i in 0..g.len() {
                            buf[i] += g[i] * (1.0 - y[i] * y[i]);
                        }
                    }
                }
                Op::Softmax { x } => {
                    let x = *x;
                    if self.rg(x) {
                        let y = node.data.as_slice().to_vec();
                        let s: f64 = g.iter().zip(&y).map(|(&gi, &yi)| gi * yi).sum();
                        let buf = Self::slot(&mut scratch, x, g.len());
                        for i in 0..g.len() {
                            buf[i] += y[i] * (g[i] - s);
                        }
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let len = self.value(p).len();
                        if self.rg(p) {
                            Self::axpy(&mut scratch, p, 1.0, &g[off..off + len]);
                        }
                        off += len;
                    }
                }
                Op::Dot { a, b } => {
                    let (a, b) = (*a, *b);
                    let g0 = g[0];
                    if self.rg(a) {
                        let bv = self.value(b).to_vec();
                        let buf = Self::slot(&mut scratch, a, bv.len());
                        for i in 0..bv.len() {
                            buf[i] += g0 * bv[i];
                        }
                    }
                    if self.rg(b) {
                        let av = self.value(a).to_vec();
                        let buf = Self::slot(&mut scratch, b, av.len());
                        for i in 0..av.len() {
                            buf[i] += g0 * av[i];
                        }
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let weights = *weights;
                    let items = items.clone();
                    let wd = self.value(weights).to_vec();
                    for (j, &it) in items.iter().enumerate() {
                        if self.rg(it) {
                            Self::axpy(&mut scratch, it, wd[j], &g);
                        }
                    }
                    if self.rg(weights) {
                        let mut wg = vec![0.0; items.len()];
                        for (j, &it) in items.iter().enumerate() {
                            let iv = self.value(it);
                            wg[j] = g.iter().zip(iv).map(|(&gi, &vi)| gi * vi).sum();
                        }
                        Self::axpy(&mut scratch, weights, 1.0, &wg);
                    }
                }
                Op::EmbedRow { table, row } => {
                    let (table, row) = (*table, *row);
                    if self.rg(table) {
                        let d = g.len();
                        let numel = self.value(table).len();
                        let buf = Self::slot(&mut scratch, table, numel);
                        let dst = &mut buf[row * d..(row + 1) * d];
                        for i in 0..d {
                            dst[i] += g[i];
                        }
                    }
                }
                Op::CrossEntropy { dist, target } => {
                    let (dist, target) = (*dist, *target);
                    if self.rg(dist) {
                        let p = self.value(dist)[target];
                        if p >= PROB_FLOOR {
                            let len = self.value(dist).len();
                            let buf = Self::slot(&mut scratch, dist, len);
                            buf[target] += -g[0] / p;
                        }
                        // Below the floor the loss is constant, so the
                        // gradient is exactly zero.
                    }
                }
                Op::Bce { prob, label } => {
                    let (prob, label) = (*prob, *label);
                    if self.rg(prob) {
                        let p = self.value(prob)[0];
                        if p > PROB_FLOOR && p < 1.0 - PROB_FLOOR {
                            let buf = Self::slot(&mut scratch, prob, 1);
                            buf[0] += g[0] * ((1.0 - label) / (1.0 - p) - label / p);
                        }
                    }
                }
                Op::SumVec { x } => {
                    let x = *x;
                    if self.rg(x) {
                        let len = self.value(x).len();
                        let g0 = g[0];
                        let buf = Self::slot(&mut scratch, x, len);
                        for b in buf.iter_mut() {
                            *b += g0;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn slot<'s>(scratch: &'s mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &'s mut Vec<f64> {
        scratch[id.index()].get_or_insert_with(|| vec![0.0; len])
    }

    fn axpy(scratch: &mut [Option<Vec<f64>>], id: NodeId, c: f64, g: &[f64]) {
        let buf = scratch[id.index()].get_or_insert_with(|| vec![0.0; g.len()]);
        for (b, &gi) in buf.iter_mut().zip(g) {
            *b += c * gi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(ps: &mut ParamSet, name: &str, shape: Vec<usize>, data: Vec<f64>) -> ParamId {
        ps.register(name, shape, data).unwrap()
    }

    #[test]
    fn matvec_identity_and_hand_case() {
        let mut ps = ParamSet::new();
        let eye = param(&mut ps, "i", vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let mut t = Tape::new();
        let w = t.param(&ps, eye);
        let x = t.input(vec![2], vec![3.0, 4.0]).unwrap();
        let y = t.matvec(w, x).unwrap();
        assert_eq!(t.value(y), &[3.0, 4.0]);

        // [[1,2]]·[3,4] = [11]
        let mut ps2 = ParamSet::new();
        let a = param(&mut ps2, "a", vec![1, 2], vec![1.0, 2.0]);
        let mut t2 = Tape::new();
        let w2 = t2.param(&ps2, a);
        let x2 = t2.input(vec![2], vec![3.0, 4.0]).unwrap();
        let y2 = t2.matvec(w2, x2).unwrap();
        assert_eq!(t2.value(y2), &[11.0]);
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let mut ps = ParamSet::new();
        let a = param(&mut ps, "a", vec![2, 3], vec![0.0; 6]);
        let mut t = Tape::new();
        let w = t.param(&ps, a);
        let x = t.input(vec![2], vec![0.0; 2]).unwrap();
        match t.matvec(w, x) {
            Err(NumericsError::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_laws() {
        let mut t = Tape::new();
        let x = t.input(vec![2], vec![0.0, 0.0]).unwrap();
        let y = t.softmax(x).unwrap();
        assert_eq!(t.value(y), &[0.5, 0.5]);

        let x2 = t
            .input(vec![3], vec![1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()])
            .unwrap();
        let y2 = t.softmax(x2).unwrap();
        let v = t.value(y2);
        assert!((v[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((v[1] - 2.0 / 6.0).abs() < 1e-12);
        assert!((v[2] - 3.0 / 6.0).abs() < 1e-12);

        // Large inputs force max-subtraction.
        let x3 = t.input(vec![2], vec![1000.0, 1000.0]).unwrap();
        let y3 = t.softmax(x3).unwrap();
        assert_eq!(t.value(y3), &[0.5, 0.5]);

        let x4 = t.input(vec![2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(t.softmax(x4), Err(NumericsError::NonFinite(_))));
    }

    #[test]
    fn cross_entropy_cases() {
        let mut t = Tape::new();
        // One-hot at the target → 0.
        let d = t.input(vec![3], vec![0.0, 1.0, 0.0]).unwrap();
        let l = t.cross_entropy(d, 1).unwrap();
        assert_eq!(t.value(l)[0], 0.0);
        // Uniform over V → ln V.
        let d2 = t.input(vec![4], vec![0.25; 4]).unwrap();
        let l2 = t.cross_entropy(d2, 2).unwrap();
        assert!((t.value(l2)[0] - 4.0f64.ln()).abs() < 1e-15);
        // −ln 0.75, independently computed digits.
        let d3 = t.input(vec![2], vec![0.25, 0.75]).unwrap();
        let l3 = t.cross_entropy(d3, 1).unwrap();
        assert!((t.value(l3)[0] - 0.2876820724517809).abs() < 1e-15);
        // Target bound.
        let d4 = t.input(vec![2], vec![0.5, 0.5]).unwrap();
        assert!(t.cross_entropy(d4, 2).is_err());
    }

    #[test]
    fn embed_row_lookup_and_bounds() {
        let mut ps = ParamSet::new();
        let tb = param(&mut ps, "emb", vec![3, 2], vec![1., 2., 3., 4., 5., 6.]);
        let mut t = Tape::new();
        let table = t.param(&ps, tb);
        let r = t.embed_row(table, 1).unwrap();
        assert_eq!(t.value(r), &[3.0, 4.0]);
        assert!(matches!(
            t.embed_row(table, 3),
            Err(NumericsError::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn embed_row_backward_scatters() {
        let mut ps = ParamSet::new();
        let tb = param(&mut ps, "emb", vec![3, 2], vec![0.0; 6]);
        let mut t = Tape::new();
        let table = t.param(&ps, tb);
        let r = t.embed_row(table, 2).unwrap();
        let s = t.sum_vec(r);
        let mut acc = GradAccum::new(&ps);
        t.backward(s, &mut acc).unwrap();
        assert_eq!(acc.get(tb).unwrap(), &[0., 0., 0., 0., 1., 1.]);
    }

    #[test]
    fn product_rule_and_tanh_gradient() {
        let mut ps = ParamSet::new();
        let xid = param(&mut ps, "x", vec![1], vec![3.0]);
        let yid = param(&mut ps, "y", vec![1], vec![5.0]);
        let mut t = Tape::new();
        let x = t.param(&ps, xid);
        let y = t.param(&ps, yid);
        let l = t.mul(x, y).unwrap();
        let mut acc = GradAccum::new(&ps);
        t.backward(l, &mut acc).unwrap();
        assert_eq!(acc.get(xid).unwrap(), &[5.0]);
        assert_eq!(acc.get(yid).unwrap(), &[3.0]);

        let mut ps2 = ParamSet::new();
        let zid = param(&mut ps2, "z", vec![1], vec![0.0]);
        let mut t2 = Tape::new();
        let z = t2.param(&ps2, zid);
        let l2 = t2.tanh(z);
        let mut acc2 = GradAccum::new(&ps2);
        t2.backward(l2, &mut acc2).unwrap();
        assert_eq!(acc2.get(zid).unwrap(), &[1.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut ps = ParamSet::new();
        let xid = param(&mut ps, "x", vec![2], vec![1.0, 2.0]);
        let mut t = Tape::new();
        let x = t.param(&ps, xid);
        let y = t.scale(x, 2.0);
        let mut acc = GradAccum::new(&ps);
        assert!(matches!(
            t.backward(y, &mut acc),
            Err(NumericsError::NotScalar { .. })
        ));
    }

    #[test]
    fn repeated_backward_accumulates_leaf_grads() {
        // Gradients of (l1 + l2) equal the sum of separate backward calls.
        let mut ps = ParamSet::new();
        let xid = param(&mut ps, "x", vec![1], vec![2.0]);
        let mut t = Tape::new();
        let x = t.param(&ps, xid);
        let l1 = t.mul(x, x).unwrap(); // x², d/dx = 4
        let l2 = t.scale(x, 3.0); // 3x, d/dx = 3
        let mut acc = GradAccum::new(&ps);
        t.backward(l1, &mut acc).unwrap();
        t.backward(l2, &mut acc).unwrap();
        assert!((acc.get(xid).unwrap()[0] - 7.0).abs() < 1e-12);

        let mut acc2 = GradAccum::new(&ps);
        let total = t.add(l1, l2).unwrap();
        t.backward(total, &mut acc2).unwrap();
        assert!((acc2.get(xid).unwrap()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_params_receive_no_gradient() {
        let mut ps = ParamSet::new();
        let xid = param(&mut ps, "x", vec![1], vec![2.0]);
        ps.set_trainable(xid, false);
        let mut t = Tape::new();
        let x = t.param(&ps, xid);
        let l = t.mul(x, x).unwrap();
        let mut acc = GradAccum::new(&ps);
        t.backward(l, &mut acc).unwrap();
        assert!(acc.get(xid).is_none());
    }

    #[test]
    fn weighted_sum_matches_manual_mix() {
        let mut t = Tape::new();
        let w = t.input(vec![2], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let a = t.input(vec![2], vec![3.0, 0.0]).unwrap();
        let b = t.input(vec![2], vec![0.0, 3.0]).unwrap();
        let c = t.weighted_sum(w, &[a, b]).unwrap();
        assert!((t.value(c)[0] - 2.0).abs() < 1e-12);
        assert!((t.value(c)[1] - 1.0).abs() < 1e-12);
    }
}
