//! Entropic optimal transport by alternating scaling.
//!
//! [`sinkhorn_distance`] works in the kernel domain and records every scaling
//! vector so the backward pass can unroll the iterations exactly.
//! [`ot_sinkhorn`] works in the log domain and tolerates small ε.

use super::{cost_matrix, Pmf, TransportPlan};
use crate::diffcore::{CustomOp, Tape, Tensor2, Var};
use crate::error::{Error, Result};

/// Largest `(c − min_row c)/ε` the kernel may hold without underflow.
const KERNEL_RANGE: f64 = 700.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once the row-marginal L1 violation falls below this. Zero runs
    /// exactly `max_iters` iterations.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, max_iters: 500, tol: 1e-6 }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("sinkhorn epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("sinkhorn max_iters must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("sinkhorn tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornInfo {
    pub iterations: usize,
    pub converged: bool,
    /// Final row-marginal L1 violation.
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornResult {
    pub distance: f64,
    pub plan: TransportPlan,
    pub info: SinkhornInfo,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn between two distributions under Euclidean cost.
pub fn ot_sinkhorn(p: &Pmf, q: &Pmf, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    let cost = cost_matrix(p, q)?;
    sinkhorn_log(&p.weights, &q.weights, cost, cfg)
}

pub(crate) fn sinkhorn_log(p: &[f64], q: &[f64], cost: Tensor2, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    cfg.validate()?;
    let (n, m) = cost.shape();
    if p.len() != n || q.len() != m {
        return Err(Error::dim("ot_sinkhorn", format!("cost {:?} for marginals {} and {}", (n, m), p.len(), q.len())));
    }
    let eps = cfg.epsilon;
    let log_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let log_q: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let row_mass = |f: &[f64], g: &[f64], i: usize| -> f64 {
        (0..m).map(|j| ((f[i] + g[j] - cost.get(i, j)) / eps).exp()).sum()
    };
    let mut info = SinkhornInfo { iterations: 0, converged: false, violation: f64::INFINITY };
    for it in 0..cfg.max_iters {
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost.get(i, j)) / eps));
            f[i] = eps * (log_p[i] - lse);
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost.get(i, j)) / eps));
            g[j] = eps * (log_q[j] - lse);
        }
        let violation: f64 = (0..n).map(|i| (row_mass(&f, &g, i) - p[i]).abs()).sum();
        info = SinkhornInfo { iterations: it + 1, converged: violation < cfg.tol, violation };
        if info.converged {
            break;
        }
    }
    let mut gamma = Tensor2::zeros(n, m);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let v = if p[i] == 0.0 || q[j] == 0.0 { 0.0 } else { ((f[i] + g[j] - cost.get(i, j)) / eps).exp() };
            gamma.set(i, j, v);
            total += v * cost.get(i, j);
        }
    }
    if !total.is_finite() {
        return Err(Error::Evaluation("sinkhorn produced a non-finite distance".into()));
    }
    Ok(SinkhornResult { distance: total, plan: TransportPlan { gamma, cost, total_cost: total }, info })
}

struct Iterate {
    a: Vec<f64>,
    u: Vec<f64>,
    b: Vec<f64>,
    v: Vec<f64>,
}

/// Forward record of a kernel-domain solve.
struct KernelSolve {
    kernel: Tensor2,
    iterates: Vec<Iterate>,
    gamma: Tensor2,
    distance: f64,
    info: SinkhornInfo,
}

fn mat_vec(k: &Tensor2, v: &[f64]) -> Vec<f64> {
    (0..k.rows()).map(|i| k.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn mat_t_vec(k: &Tensor2, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; k.cols()];
    for (i, &ui) in u.iter().enumerate() {
        if ui != 0.0 {
            out.iter_mut().zip(k.row(i)).for_each(|(o, kij)| *o += ui * kij);
        }
    }
    out
}

fn kernel_solve(cost: &Tensor2, p: &[f64], q: &[f64], cfg: &SinkhornConfig) -> Result<KernelSolve> {
    cfg.validate()?;
    let (n, m) = cost.shape();
    let eps = cfg.epsilon;
    let mut kernel = Tensor2::zeros(n, m);
    for i in 0..n {
        let row = cost.row(i);
        let shift = row.iter().copied().fold(f64::INFINITY, f64::min);
        let span = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) - shift;
        if span / eps > KERNEL_RANGE {
            return Err(Error::Evaluation(format!(
                "cost range {span:.3} is too large for epsilon {eps} (limit {KERNEL_RANGE}·epsilon)"
            )));
        }
        kernel.row_mut(i).iter_mut().zip(row).for_each(|(k, c)| *k = (-(c - shift) / eps).exp());
    }

    let mut iterates: Vec<Iterate> = Vec::new();
    let mut a = mat_vec(&kernel, &vec![1.0; m]);
    let mut info = SinkhornInfo { iterations: 0, converged: false, violation: f64::INFINITY };
    for it in 0..cfg.max_iters {
        let u: Vec<f64> = p.iter().zip(&a).map(|(pi, ai)| pi / ai).collect();
        let b = mat_t_vec(&kernel, &u);
        let v_next: Vec<f64> = q.iter().zip(&b).map(|(qj, bj)| qj / bj).collect();
        let a_next = mat_vec(&kernel, &v_next);
        let violation: f64 = u.iter().zip(&a_next).zip(p).map(|((ui, ai), pi)| (ui * ai - pi).abs()).sum();
        iterates.push(Iterate { a, u, b, v: v_next });
        a = a_next;
        info = SinkhornInfo { iterations: it + 1, converged: violation < cfg.tol, violation };
        if !violation.is_finite() {
            return Err(Error::Evaluation("sinkhorn scaling vectors overflowed".into()));
        }
        if info.converged {
            break;
        }
    }
    let last = iterates.last().expect("at least one iteration");
    let mut gamma = Tensor2::zeros(n, m);
    let mut distance = 0.0;
    for i in 0..n {
        for j in 0..m {
            let g = last.u[i] * kernel.get(i, j) * last.v[j];
            gamma.set(i, j, g);
            distance += g * cost.get(i, j);
        }
    }
    if !distance.is_finite() {
        return Err(Error::Evaluation("sinkhorn produced a non-finite distance".into()));
    }
    Ok(KernelSolve { kernel, iterates, gamma, distance, info })
}

struct SinkhornOp {
    solve: KernelSolve,
    epsilon: f64,
}

impl CustomOp for SinkhornOp {
    fn name(&self) -> &'static str {
        "sinkhorn"
    }

    fn backward(&self, inputs: &[&Tensor2], _output: &Tensor2, grad: &Tensor2) -> Vec<Option<Tensor2>> {
        let (cost, p, q) = (inputs[0], inputs[1].data(), inputs[2].data());
        let s = &self.solve;
        let k = &s.kernel;
        let (n, m) = k.shape();
        let g = grad.data()[0];
        let last = s.iterates.last().expect("solved");

        let mut grad_c = s.gamma.scaled(g);
        let mut grad_k = Tensor2::zeros(n, m);
        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                let c = g * cost.get(i, j);
                gu[i] += c * k.get(i, j) * last.v[j];
                gv[j] += c * last.u[i] * k.get(i, j);
                grad_k.set(i, j, c * last.u[i] * last.v[j]);
            }
        }
        let mut gp = vec![0.0; n];
        let mut gq = vec![0.0; m];
        for (t, it) in s.iterates.iter().enumerate().rev() {
            // v = q / b
            let gb: Vec<f64> = (0..m)
                .map(|j| {
                    gq[j] += gv[j] / it.b[j];
                    -gv[j] * q[j] / (it.b[j] * it.b[j])
                })
                .collect();
            // b = Kᵀ u
            let ku = mat_vec(k, &gb);
            for i in 0..n {
                gu[i] += ku[i];
                let ui = it.u[i];
                if ui != 0.0 {
                    grad_k.row_mut(i).iter_mut().zip(&gb).for_each(|(gk, b)| *gk += ui * b);
                }
            }
            // u = p / a
            let ga: Vec<f64> = (0..n)
                .map(|i| {
                    gp[i] += gu[i] / it.a[i];
                    -gu[i] * p[i] / (it.a[i] * it.a[i])
                })
                .collect();
            // a = K v_prev, with v_prev = 1 before the first iteration
            let ones = vec![1.0; m];
            let v_prev = if t == 0 { &ones } else { &s.iterates[t - 1].v };
            for i in 0..n {
                if ga[i] != 0.0 {
                    grad_k.row_mut(i).iter_mut().zip(v_prev).for_each(|(gk, v)| *gk += ga[i] * v);
                }
            }
            gv = mat_t_vec(k, &ga);
            gu = vec![0.0; n];
        }
        for ((gc, gk), kv) in grad_c.data_mut().iter_mut().zip(grad_k.data()).zip(k.data()) {
            *gc -= gk * kv / self.epsilon;
        }
        vec![Some(grad_c), Some(Tensor2::row_vector(&gp)), Some(Tensor2::row_vector(&gq))]
    }
}

/// Differentiable entropic transport cost `⟨γ, C⟩` for cost `C` (n×m) and
/// marginal rows `p` (1×n), `q` (1×m).
pub fn sinkhorn_distance(tape: &mut Tape, cost: Var, p: Var, q: Var, cfg: &SinkhornConfig) -> Result<(Var, SinkhornInfo)> {
    let (n, m) = tape.shape(cost);
    if tape.shape(p) != (1, n) || tape.shape(q) != (1, m) {
        return Err(Error::dim(
            "ot_sinkhorn",
            format!("cost {:?} with marginals {:?} and {:?}", (n, m), tape.shape(p), tape.shape(q)),
        ));
    }
    let solve = kernel_solve(tape.value(cost), tape.value(p).data(), tape.value(q).data(), cfg)?;
    let info = solve.info;
    let out = Tensor2::scalar(solve.distance);
    let var = tape.custom(&[cost, p, q], out, Box::new(SinkhornOp { solve, epsilon: cfg.epsilon }))?;
    Ok((var, info))
}
