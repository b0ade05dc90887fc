//! Reverse-mode gradient tape.
//!
//! Every primitive applied through a [`Tape`] stores its value; when the tape
//! is recording it also stores the operation so [`Tape::backward`] can replay
//! the graph in reverse. Nodes are appended in evaluation order, so reverse
//! index order is a valid topological order.

use super::ops::{self, Axis};
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor2};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Backward rule for an operation implemented outside the built-in set.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Vector-Jacobian products, one entry per input (`None` = no contribution).
    fn backward(&self, inputs: &[&Tensor2], output: &Tensor2, grad: &Tensor2) -> Vec<Option<Tensor2>>;
}

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Sigmoid(Var),
    Softmax(Var, Axis),
    Gelu(Var),
    LayerNorm { x: Var, xhat: Tensor2, inv_std: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, probs: Vec<Tensor2> },
    ConcatRows(Vec<Var>),
    PrependBroadcast(Var, Var),
    SliceRows(Var, usize),
    Transpose(Var),
    MeanRows(Var),
    SumAll(Var),
    Diag(Var),
    PairwiseDist(Var, Var),
    StraightThrough(Var),
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A recording tape (training mode).
    pub fn new() -> Self {
        Self { nodes: Vec::new(), recording: true }
    }

    /// A tape that keeps values only; `backward` is unavailable.
    pub fn no_grad() -> Self {
        Self { nodes: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, name: &'static str, value: Tensor2, op: Op, deps: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Evaluation(format!("{name} produced a non-finite value")));
        }
        let requires_grad = match op {
            Op::Param(_) => self.recording,
            Op::Input => false,
            _ => self.recording && deps.iter().any(|d| self.nodes[d.0].requires_grad),
        };
        let op = if requires_grad || matches!(op, Op::Param(_)) { op } else { Op::Input };
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor2) -> Var {
        self.push("input", value, Op::Input, &[]).unwrap_or_else(|_| {
            panic!("non-finite tape input");
        })
    }

    /// Like [`Tape::input`] but reports non-finite values as an error.
    pub fn try_input(&mut self, value: Tensor2) -> Result<Var> {
        self.push("input", value, Op::Input, &[])
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).clone();
        self.nodes.push(Node { value, op: Op::Param(id), requires_grad: self.recording });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim("sub", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let mut out = va.clone();
        out.add_scaled_assign(vb, -1.0);
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::mul(self.value(a), self.value(b))?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).scaled(s);
        self.push("scale", out, Op::Scale(a, s), &[a])
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = ops::add_bias(self.value(x), self.value(bias))?;
        self.push("add_bias", out, Op::AddBias(x, bias), &[x, bias])
    }

    /// `x · w + b` with `w` c×o and `b` 1×o.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = ops::sigmoid(self.value(x));
        self.push("sigmoid", out, Op::Sigmoid(x), &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let out = ops::softmax(self.value(x), axis)?;
        self.push("softmax", out, Op::Softmax(x, axis), &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = ops::gelu(self.value(x));
        self.push("gelu", out, Op::Gelu(x), &[x])
    }

    pub fn layer_norm(&mut self, x: Var) -> Result<Var> {
        let (out, inv_std) = ops::layer_norm(self.value(x))?;
        let xhat = if self.recording { out.clone() } else { Tensor2::zeros(0, 0) };
        self.push("layer_norm", out, Op::LayerNorm { x, xhat, inv_std }, &[x])
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (out, probs) = ops::attention(self.value(q), self.value(k), self.value(v), heads)?;
        self.push("attention", out, Op::Attention { q, k, v, probs }, &[q, k, v])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor2> = parts.iter().map(|p| self.value(*p)).collect();
        let out = ops::concat_rows(&values)?;
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn prepend_broadcast(&mut self, v: Var, x: Var) -> Result<Var> {
        let out = ops::prepend_broadcast(self.value(v), self.value(x))?;
        self.push("prepend_broadcast", out, Op::PrependBroadcast(v, x), &[v, x])
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let out = ops::slice_rows(self.value(x), start, end)?;
        self.push("slice_rows", out, Op::SliceRows(x, start), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose();
        self.push("transpose", out, Op::Transpose(x), &[x])
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let out = ops::mean_rows(self.value(x))?;
        self.push("mean_rows", out, Op::MeanRows(x), &[x])
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let out = Tensor2::scalar(self.value(x).sum());
        self.push("sum_all", out, Op::SumAll(x), &[x])
    }

    pub fn diag(&mut self, v: Var) -> Result<Var> {
        let out = ops::diag(self.value(v))?;
        self.push("diag", out, Op::Diag(v), &[v])
    }

    pub fn pairwise_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::pairwise_dist(self.value(a), self.value(b))?;
        self.push("pairwise_dist", out, Op::PairwiseDist(a, b), &[a, b])
    }

    /// Forward value `hard`, backward identity into `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Tensor2) -> Result<Var> {
        if hard.shape() != self.shape(soft) {
            return Err(Error::dim(
                "straight_through",
                format!("hard {:?} vs soft {:?}", hard.shape(), self.shape(soft)),
            ));
        }
        self.push("straight_through", hard, Op::StraightThrough(soft), &[soft])
    }

    pub fn custom(&mut self, inputs: &[Var], output: Tensor2, op: Box<dyn CustomOp>) -> Result<Var> {
        let name = op.name();
        self.push(name, output, Op::Custom { inputs: inputs.to_vec(), op }, inputs)
    }

    /// Replays the tape in reverse from the scalar `loss`.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        if !self.recording {
            return Err(Error::State("backward on a tape that is not recording".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::State("backward before forward: loss is not on this tape".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::State(format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        let mut out = Gradients::zeros_like(store);
        let mut grads: Vec<Option<Tensor2>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Param(id) = node.op {
                out.accumulate(id, &g);
                continue;
            }
            out.ops_replayed += 1;
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(out)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        let acc = |grads: &mut [Option<Tensor2>], v: Var, t: Tensor2| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let mut da = Tensor2::zeros(va.rows(), va.cols());
                    matmul_nt_into(g, vb, &mut da);
                    acc(grads, *a, da);
                }
                if self.needs(*b) {
                    let mut db = Tensor2::zeros(vb.rows(), vb.cols());
                    matmul_tn_into(va, g, &mut db);
                    acc(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    acc(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    acc(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    acc(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    acc(grads, *b, g.scaled(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(grads, *a, ops::mul(g, self.value(*b)).expect("shape checked in forward"));
                }
                if self.needs(*b) {
                    acc(grads, *b, ops::mul(g, self.value(*a)).expect("shape checked in forward"));
                }
            }
            Op::Scale(a, s) => acc(grads, *a, g.scaled(*s)),
            Op::AddBias(x, b) => {
                if self.needs(*x) {
                    acc(grads, *x, g.clone());
                }
                if self.needs(*b) {
                    let mut db = Tensor2::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(grads, *b, db);
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let data = g.data().iter().zip(y.data()).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
                acc(grads, *x, Tensor2::from_vec(y.rows(), y.cols(), data).expect("same shape"));
            }
            Op::Softmax(x, axis) => {
                let dx = match axis {
                    Axis::Row => softmax_backward_rows(&node.value, g),
                    Axis::Col => softmax_backward_rows(&node.value.transpose(), &g.transpose()).transpose(),
                };
                acc(grads, *x, dx);
            }
            Op::Gelu(x) => {
                let vx = self.value(*x);
                let data =
                    g.data().iter().zip(vx.data()).map(|(gv, xv)| gv * ops::gelu_grad_scalar(*xv)).collect();
                acc(grads, *x, Tensor2::from_vec(vx.rows(), vx.cols(), data).expect("same shape"));
            }
            Op::LayerNorm { x, xhat, inv_std } => {
                let c = xhat.cols() as f64;
                let mut dx = Tensor2::zeros(xhat.rows(), xhat.cols());
                for r in 0..xhat.rows() {
                    let (gr, xr) = (g.row(r), xhat.row(r));
                    let mean_g = gr.iter().sum::<f64>() / c;
                    let mean_gx = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / c;
                    for ((o, gv), xv) in dx.row_mut(r).iter_mut().zip(gr).zip(xr) {
                        *o = inv_std[r] * (gv - mean_g - xv * mean_gx);
                    }
                }
                acc(grads, *x, dx);
            }
            Op::Attention { q, k, v, probs } => {
                let (dq, dk, dv) = attention_backward(self.value(*q), self.value(*k), self.value(*v), probs, g);
                if self.needs(*q) {
                    acc(grads, *q, dq);
                }
                if self.needs(*k) {
                    acc(grads, *k, dk);
                }
                if self.needs(*v) {
                    acc(grads, *v, dv);
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let rows = self.value(*p).rows();
                    if self.needs(*p) {
                        acc(grads, *p, g.slice_rows(start, start + rows));
                    }
                    start += rows;
                }
            }
            Op::PrependBroadcast(v, x) => {
                let a = self.value(*v).cols();
                if self.needs(*v) {
                    let mut dv = Tensor2::zeros(1, a);
                    for r in 0..g.rows() {
                        for (o, gv) in dv.data_mut().iter_mut().zip(&g.row(r)[..a]) {
                            *o += gv;
                        }
                    }
                    acc(grads, *v, dv);
                }
                if self.needs(*x) {
                    let b = g.cols() - a;
                    let mut dx = Tensor2::zeros(g.rows(), b);
                    for r in 0..g.rows() {
                        dx.row_mut(r).copy_from_slice(&g.row(r)[a..]);
                    }
                    acc(grads, *x, dx);
                }
            }
            Op::SliceRows(x, start) => {
                let vx = self.value(*x);
                let mut dx = Tensor2::zeros(vx.rows(), vx.cols());
                for r in 0..g.rows() {
                    dx.row_mut(start + r).copy_from_slice(g.row(r));
                }
                acc(grads, *x, dx);
            }
            Op::Transpose(x) => acc(grads, *x, g.transpose()),
            Op::MeanRows(x) => {
                let vx = self.value(*x);
                let s = 1.0 / vx.rows() as f64;
                let mut dx = Tensor2::zeros(vx.rows(), vx.cols());
                for r in 0..vx.rows() {
                    for (o, gv) in dx.row_mut(r).iter_mut().zip(g.data()) {
                        *o = gv * s;
                    }
                }
                acc(grads, *x, dx);
            }
            Op::SumAll(x) => {
                let vx = self.value(*x);
                acc(grads, *x, Tensor2::filled(vx.rows(), vx.cols(), g.data()[0]));
            }
            Op::Diag(v) => {
                let n = self.value(*v).cols();
                let dv: Vec<f64> = (0..n).map(|i| g.get(i, i)).collect();
                acc(grads, *v, Tensor2::row_vector(&dv));
            }
            Op::PairwiseDist(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let dist = &node.value;
                let mut da = Tensor2::zeros(va.rows(), va.cols());
                let mut db = Tensor2::zeros(vb.rows(), vb.cols());
                for i in 0..va.rows() {
                    for j in 0..vb.rows() {
                        let c = dist.get(i, j);
                        if c == 0.0 {
                            continue;
                        }
                        let w = g.get(i, j) / c;
                        if w == 0.0 {
                            continue;
                        }
                        for t in 0..va.cols() {
                            let diff = w * (va.get(i, t) - vb.get(j, t));
                            da.row_mut(i)[t] += diff;
                            db.row_mut(j)[t] -= diff;
                        }
                    }
                }
                if self.needs(*a) {
                    acc(grads, *a, da);
                }
                if self.needs(*b) {
                    acc(grads, *b, db);
                }
            }
            Op::StraightThrough(soft) => acc(grads, *soft, g.clone()),
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor2> = inputs.iter().map(|v| self.value(*v)).collect();
                let contributions = op.backward(&values, &node.value, g);
                for (v, c) in inputs.iter().zip(contributions) {
                    if let Some(c) = c {
                        if self.needs(*v) {
                            acc(grads, *v, c);
                        }
                    }
                }
            }
        }
    }
}

fn softmax_backward_rows(y: &Tensor2, g: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), g.row(r));
        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((o, yv), gv) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - inner);
        }
    }
    dx
}

fn attention_backward(
    q: &Tensor2,
    k: &Tensor2,
    v: &Tensor2,
    probs: &[Tensor2],
    g: &Tensor2,
) -> (Tensor2, Tensor2, Tensor2) {
    let d = q.cols();
    let heads = probs.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (nq, nk) = (q.rows(), k.rows());
    let mut dq = Tensor2::zeros(nq, d);
    let mut dk = Tensor2::zeros(nk, d);
    let mut dv = Tensor2::zeros(nk, d);
    for (h, p) in probs.iter().enumerate() {
        let off = h * dh;
        for i in 0..nq {
            let gi = &g.row(i)[off..off + dh];
            // dP_ij = g_i · v_j ; dS = P ⊙ (dP − Σ_j P_ij dP_ij)
            let mut dp = vec![0.0; nk];
            for (j, dpj) in dp.iter_mut().enumerate() {
                let vj = &v.row(j)[off..off + dh];
                *dpj = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                let w = p.get(i, j);
                for (o, gv) in dv.row_mut(j)[off..off + dh].iter_mut().zip(gi) {
                    *o += w * gv;
                }
            }
            let pr = p.row(i);
            let inner: f64 = pr.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for j in 0..nk {
                let ds = pr[j] * (dp[j] - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                for t in off..off + dh {
                    let (qv, kv) = (q.get(i, t), k.get(j, t));
                    dq.row_mut(i)[t] += ds * kv;
                    dk.row_mut(j)[t] += ds * qv;
                }
            }
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_gradient_is_input() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor2::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let x = tape.input(Tensor2::col_vector(&[1.5, -2.0, 3.0]));
        let y = tape.matmul(wv, x).unwrap();
        let loss = tape.sum_all(y).unwrap();
        let grads = tape.backward(loss, &store).unwrap();
        let g = grads.get(w);
        for r in 0..2 {
            assert_eq!(g.row(r), &[1.5, -2.0, 3.0]);
        }
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor2::scalar(0.0));
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let s = tape.sigmoid(wv).unwrap();
        let grads = tape.backward(s, &store).unwrap();
        assert_eq!(grads.get(w).item().unwrap(), 0.25);
    }

    #[test]
    fn unreachable_param_has_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.add("used", Tensor2::scalar(2.0));
        let unused = store.add("unused", Tensor2::scalar(5.0));
        let mut tape = Tape::new();
        let u = tape.param(&store, used);
        let _ = tape.param(&store, unused);
        let loss = tape.mul(u, u).unwrap();
        let grads = tape.backward(loss, &store).unwrap();
        assert_eq!(grads.get(used).item().unwrap(), 4.0);
        assert_eq!(grads.get(unused).item().unwrap(), 0.0);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor2::scalar(3.0));
        let mut tape = Tape::new();
        let pv = tape.param(&store, p);
        let zero = tape.scale(pv, 0.0).unwrap();
        let c = tape.input(Tensor2::scalar(7.0));
        let loss = tape.add(zero, c).unwrap();
        let grads = tape.backward(loss, &store).unwrap();
        assert_eq!(grads.get(p).item().unwrap(), 0.0);
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let store = ParamStore::new();
        let tape = Tape::new();
        let err = tape.backward(Var(0), &store).unwrap_err();
        assert!(matches!(err, Error::State(_)));
        let mut nograd = Tape::no_grad();
        let x = nograd.input(Tensor2::scalar(1.0));
        assert!(matches!(nograd.backward(x, &store), Err(Error::State(_))));
    }

    #[test]
    fn replay_visits_each_op_once() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor2::row_vector(&[0.3, -0.2, 0.1]));
        let mut tape = Tape::new();
        let mut x = tape.param(&store, p);
        let n = 7;
        for i in 0..n {
            x = match i % 3 {
                0 => tape.sigmoid(x).unwrap(),
                1 => tape.scale(x, 1.5).unwrap(),
                _ => tape.gelu(x).unwrap(),
            };
        }
        let loss = tape.sum_all(x).unwrap();
        let grads = tape.backward(loss, &store).unwrap();
        assert_eq!(grads.ops_replayed, n + 1);
    }

    #[test]
    fn straight_through_forwards_hard_and_backprops_soft() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor2::col_vector(&[0.2, 0.8]));
        let mut tape = Tape::new();
        let soft = tape.param(&store, p);
        let hard = tape.straight_through(soft, Tensor2::col_vector(&[0.0, 1.0])).unwrap();
        assert_eq!(tape.value(hard).data(), &[0.0, 1.0]);
        let w = tape.input(Tensor2::row_vector(&[3.0, -1.0]));
        let y = tape.matmul(w, hard).unwrap();
        let grads = tape.backward(y, &store).unwrap();
        assert_eq!(grads.get(p).data(), &[3.0, -1.0]);
    }

    #[test]
    fn non_finite_forward_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor2::scalar(1e300));
        assert!(matches!(tape.mul(x, x), Err(Error::Evaluation(_))));
    }
}
