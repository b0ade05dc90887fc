//! Forward primitives as pure functions.
//!
//! Each function checks shapes and returns a fresh tensor. The tape in
//! [`super::tape`] wraps these and records what backward needs.

use super::tensor::{matmul_into, matmul_nt_into, Tensor2};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Normalize within each row (across columns).
    Row,
    /// Normalize within each column (down the rows).
    Col,
}

fn same_shape(op: &'static str, a: &Tensor2, b: &Tensor2) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn matmul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols() != b.rows() {
        return Err(Error::dim("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
    }
    let mut out = Tensor2::zeros(a.rows(), b.cols());
    matmul_into(a, b, &mut out);
    Ok(out)
}

pub fn add(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    same_shape("add", a, b)?;
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

pub fn mul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor2::from_vec(a.rows(), a.cols(), data)
}

/// Adds a 1×c bias row to every row of `x`.
pub fn add_bias(x: &Tensor2, bias: &Tensor2) -> Result<Tensor2> {
    if bias.rows() != 1 || bias.cols() != x.cols() {
        return Err(Error::dim("add_bias", format!("x {:?}, bias {:?}", x.shape(), bias.shape())));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

#[inline]
pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor2) -> Tensor2 {
    x.map(sigmoid_scalar)
}

fn softmax_slice(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// Numerically stable softmax of a plain slice.
pub fn softmax_vec(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    softmax_slice(&mut out);
    out
}

pub fn softmax(x: &Tensor2, axis: Axis) -> Result<Tensor2> {
    if x.is_empty() {
        return Err(Error::dim("softmax", "empty input"));
    }
    match axis {
        Axis::Row => {
            let mut out = x.clone();
            for r in 0..out.rows() {
                softmax_slice(out.row_mut(r));
            }
            Ok(out)
        }
        Axis::Col => Ok(softmax(&x.transpose(), Axis::Row)?.transpose()),
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

pub fn gelu(x: &Tensor2) -> Tensor2 {
    x.map(gelu_scalar)
}

/// Per-row normalization to zero mean and unit variance (no affine part).
/// Returns the normalized rows and each row's inverse standard deviation.
pub fn layer_norm(x: &Tensor2) -> Result<(Tensor2, Vec<f64>)> {
    if x.cols() == 0 {
        return Err(Error::dim("layer_norm", "zero columns"));
    }
    let c = x.cols() as f64;
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / c;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * is;
        }
        inv_std.push(is);
    }
    Ok((out, inv_std))
}

/// Scaled dot-product attention with the feature axis split into `heads`
/// equal slices. Returns the output and the per-head attention weights
/// (one `q_rows × k_rows` matrix per head, rows summing to one).
pub fn attention(q: &Tensor2, k: &Tensor2, v: &Tensor2, heads: usize) -> Result<(Tensor2, Vec<Tensor2>)> {
    let d = q.cols();
    if k.cols() != d || v.cols() != d || k.rows() != v.rows() {
        return Err(Error::dim(
            "attention",
            format!("q {:?}, k {:?}, v {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::dim("attention", format!("{d} features not divisible by {heads} heads")));
    }
    if k.rows() == 0 {
        return Err(Error::dim("attention", "no keys"));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (nq, nk) = (q.rows(), k.rows());
    let mut out = Tensor2::zeros(nq, d);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let off = h * dh;
        let mut p = Tensor2::zeros(nq, nk);
        for i in 0..nq {
            let qi = &q.row(i)[off..off + dh];
            let prow = p.row_mut(i);
            for (j, pj) in prow.iter_mut().enumerate() {
                let kj = &k.row(j)[off..off + dh];
                *pj = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_slice(prow);
        }
        for i in 0..nq {
            for j in 0..nk {
                let w = p.get(i, j);
                let vj = &v.row(j)[off..off + dh];
                let orow = &mut out.row_mut(i)[off..off + dh];
                for (o, x) in orow.iter_mut().zip(vj) {
                    *o += w * x;
                }
            }
        }
        probs.push(p);
    }
    Ok((out, probs))
}

/// Attention weights `softmax(q kᵀ / √d)` for a single head.
pub fn attention_weights(q: &Tensor2, k: &Tensor2) -> Result<Tensor2> {
    if q.cols() != k.cols() {
        return Err(Error::dim("attention_weights", format!("q {:?}, k {:?}", q.shape(), k.shape())));
    }
    let mut s = Tensor2::zeros(q.rows(), k.rows());
    matmul_nt_into(q, k, &mut s);
    softmax(&s.scaled(1.0 / (q.cols() as f64).sqrt()), Axis::Row)
}

pub fn concat_rows(parts: &[&Tensor2]) -> Result<Tensor2> {
    let cols = parts.first().map_or(0, |p| p.cols());
    let mut data = Vec::new();
    let mut rows = 0;
    for p in parts {
        if p.cols() != cols {
            return Err(Error::dim(
                "concat_rows",
                format!("column counts {:?}", parts.iter().map(|p| p.cols()).collect::<Vec<_>>()),
            ));
        }
        data.extend_from_slice(p.data());
        rows += p.rows();
    }
    Tensor2::from_vec(rows, cols, data)
}

/// Prepends the 1×a row `v` to every row of the n×b matrix `x`, giving n×(a+b).
pub fn prepend_broadcast(v: &Tensor2, x: &Tensor2) -> Result<Tensor2> {
    if v.rows() != 1 {
        return Err(Error::dim("prepend_broadcast", format!("v {:?} is not a row vector", v.shape())));
    }
    let (a, b) = (v.cols(), x.cols());
    let mut out = Tensor2::zeros(x.rows(), a + b);
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        row[..a].copy_from_slice(v.data());
        row[a..].copy_from_slice(x.row(r));
    }
    Ok(out)
}

pub fn slice_rows(x: &Tensor2, start: usize, end: usize) -> Result<Tensor2> {
    if start > end || end > x.rows() {
        return Err(Error::dim("slice_rows", format!("{start}..{end} of {} rows", x.rows())));
    }
    Ok(x.slice_rows(start, end))
}

/// Column means, as a 1×c row.
pub fn mean_rows(x: &Tensor2) -> Result<Tensor2> {
    if x.rows() == 0 {
        return Err(Error::dim("mean_rows", "no rows"));
    }
    let mut out = Tensor2::zeros(1, x.cols());
    for r in 0..x.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    Ok(out.scaled(1.0 / x.rows() as f64))
}

/// n×n diagonal matrix from a 1×n row.
pub fn diag(v: &Tensor2) -> Result<Tensor2> {
    if v.rows() != 1 {
        return Err(Error::dim("diag", format!("{:?} is not a row vector", v.shape())));
    }
    let n = v.cols();
    let mut out = Tensor2::zeros(n, n);
    for (i, &x) in v.data().iter().enumerate() {
        out.set(i, i, x);
    }
    Ok(out)
}

/// Euclidean distances between every row of `a` and every row of `b`.
pub fn pairwise_dist(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols() != b.cols() {
        return Err(Error::dim("pairwise_dist", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut out = Tensor2::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            let d2: f64 = a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            out.set(i, j, d2.sqrt());
        }
    }
    Ok(out)
}
