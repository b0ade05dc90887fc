//! Cross-modal shared information extractor.
//!
//! Word and frame rows are scored by affine heads, perturbed with Gumbel
//! noise and normalized with a temperature softmax. The k best rows of each
//! modality form the shared set; its mean drives sigmoid gates that scale the
//! raw features elementwise. Selection is hard in the forward pass and
//! straight-through on the softmax probabilities in the backward pass.

use rand::Rng;

use crate::diffcore::{cosine, Axis, ParamStore, Tape, Tensor2, Var};
use crate::embed::pool_high;
use crate::error::{Error, Result};
use crate::layers::Affine;

/// Uniform draws are clamped to `[U_EPS, 1 - U_EPS]`.
pub const U_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct NfdtConfig {
    pub tau: f64,
    pub k_ratio: f64,
    /// Sample Gumbel noise during training. Evaluation never adds noise.
    pub noise: bool,
}

impl Default for NfdtConfig {
    fn default() -> Self {
        Self { tau: 0.5, k_ratio: 0.5, noise: true }
    }
}

impl NfdtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("nfdt.tau must be > 0, got {}", self.tau)));
        }
        if !(self.k_ratio > 0.0 && self.k_ratio <= 1.0) {
            return Err(Error::Config(format!("nfdt.k_ratio must be in (0, 1], got {}", self.k_ratio)));
        }
        Ok(())
    }

    /// Rows kept per modality: `round(k_ratio · min(n, m))`, at least one.
    pub fn k_for(&self, n: usize, m: usize) -> usize {
        ((self.k_ratio * n.min(m) as f64).round() as usize).clamp(1, n.min(m).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NfdtParams {
    pub text_score: Affine,
    pub video_score: Affine,
    pub text_gate: Affine,
    pub video_gate: Affine,
}

impl NfdtParams {
    pub fn new(store: &mut ParamStore, d: usize, rng: &mut impl Rng) -> Self {
        let score_std = 1.0 / (d as f64).sqrt();
        let gate_std = 1.0 / (2.0 * d as f64).sqrt();
        Self {
            text_score: Affine::new(store, "nfdt.text_score", d, 1, score_std, rng),
            video_score: Affine::new(store, "nfdt.video_score", d, 1, score_std, rng),
            text_gate: Affine::new(store, "nfdt.text_gate", 2 * d, d, gate_std, rng),
            video_gate: Affine::new(store, "nfdt.video_gate", 2 * d, d, gate_std, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SalienceScores {
    pub text_scores: Vec<f64>,
    pub video_scores: Vec<f64>,
}

/// The rows chosen from both modalities and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedInfoSet {
    /// 2k×d: the k text rows followed by the k video rows.
    pub selected_rows: Tensor2,
    pub text_indices: Vec<usize>,
    pub video_indices: Vec<usize>,
    pub pooled: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatePair {
    pub text_gate: Tensor2,
    pub video_gate: Tensor2,
}

/// One raw score per row (n×1).
pub fn salience(tape: &mut Tape, store: &ParamStore, low: Var, head: &Affine) -> Result<Var> {
    head.check_shape("salience", tape.shape(low).1, 1)?;
    head.forward(tape, store, low)
}

pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(U_EPS, 1.0 - U_EPS);
    -(-u.ln()).ln()
}

pub fn gumbel_noise(count: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..count).map(|_| gumbel_from_uniform(rng.random::<f64>())).collect()
}

/// `softmax((scores + noise) / tau)` on plain slices.
pub fn gumbel_softmax_values(scores: &[f64], noise: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    if scores.len() != noise.len() {
        return Err(Error::dim("gumbel_softmax", format!("{} scores, {} noise", scores.len(), noise.len())));
    }
    let z: Vec<f64> = scores.iter().zip(noise).map(|(s, g)| (s + g) / tau).collect();
    Ok(crate::diffcore::ops::softmax_vec(&z))
}

/// Tape version of [`gumbel_softmax_values`] for an n×1 score column.
pub fn gumbel_softmax(tape: &mut Tape, scores: Var, noise: &[f64], tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    let (n, c) = tape.shape(scores);
    if c != 1 || noise.len() != n {
        return Err(Error::dim("gumbel_softmax", format!("scores {:?}, {} noise values", (n, c), noise.len())));
    }
    let g = tape.input(Tensor2::col_vector(noise));
    let perturbed = tape.add(scores, g)?;
    let scaled = tape.scale(perturbed, 1.0 / tau)?;
    tape.softmax(scaled, Axis::Col)
}

/// Indices of the `k` largest values, best first; ties go to the lower index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// How the shared rows are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Selection {
    /// Hard top-k on the current probabilities.
    TopK,
    /// Fixed indices with the straight-through surrogate linearized around
    /// stored baseline probabilities. Used by gradient checks: the forward
    /// value equals the live one at the baseline, and the function is smooth
    /// in the score-head parameters.
    Frozen {
        text_indices: Vec<usize>,
        video_indices: Vec<usize>,
        text_baseline: Vec<f64>,
        video_baseline: Vec<f64>,
    },
}

fn indicator(len: usize, indices: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; len];
    for &i in indices {
        v[i] = 1.0;
    }
    v
}

pub struct SharedSelection {
    pub pooled: Var,
    pub text_indices: Vec<usize>,
    pub video_indices: Vec<usize>,
}

fn validate_k(k: usize, n: usize, m: usize) -> Result<()> {
    if k == 0 || k > n.min(m) {
        return Err(Error::Config(format!("k={k} must be in 1..={}", n.min(m))));
    }
    Ok(())
}

/// Hard top-k per modality with straight-through gradients into `probs_*`.
/// Returns the 1×d mean of the 2k selected rows.
pub fn select_topk_shared(
    tape: &mut Tape,
    text_low: Var,
    video_low: Var,
    probs_t: Var,
    probs_v: Var,
    k: usize,
    selection: &Selection,
) -> Result<SharedSelection> {
    let (n, m) = (tape.shape(text_low).0, tape.shape(video_low).0);
    validate_k(k, n, m)?;
    let (text_indices, video_indices, mask_t, mask_v) = match selection {
        Selection::TopK => {
            let ti = top_k_indices(tape.value(probs_t).data(), k);
            let vi = top_k_indices(tape.value(probs_v).data(), k);
            let mt = Tensor2::col_vector(&indicator(n, &ti));
            let mv = Tensor2::col_vector(&indicator(m, &vi));
            (ti, vi, mt, mv)
        }
        Selection::Frozen { text_indices, video_indices, text_baseline, video_baseline } => {
            if text_indices.len() != k || video_indices.len() != k {
                return Err(Error::Config("frozen selection size differs from k".into()));
            }
            let surrogate = |ind: Vec<f64>, soft: &Tensor2, base: &[f64]| -> Result<Tensor2> {
                if base.len() != soft.len() {
                    return Err(Error::dim("select_topk_shared", "baseline length"));
                }
                let v: Vec<f64> = ind.iter().zip(soft.data()).zip(base).map(|((h, s), b)| h + s - b).collect();
                Ok(Tensor2::col_vector(&v))
            };
            let mt = surrogate(indicator(n, text_indices), tape.value(probs_t), text_baseline)?;
            let mv = surrogate(indicator(m, video_indices), tape.value(probs_v), video_baseline)?;
            (text_indices.clone(), video_indices.clone(), mt, mv)
        }
    };
    let st_t = tape.straight_through(probs_t, mask_t)?;
    let st_v = tape.straight_through(probs_v, mask_v)?;
    let pooled = masked_mean(tape, text_low, video_low, st_t, st_v, 2 * k)?;
    Ok(SharedSelection { pooled, text_indices, video_indices })
}

/// `(mask_tᵀ X_T + mask_vᵀ X_V) / count` as a 1×d row.
fn masked_mean(tape: &mut Tape, text: Var, video: Var, mask_t: Var, mask_v: Var, count: usize) -> Result<Var> {
    let mt = tape.transpose(mask_t)?;
    let mv = tape.transpose(mask_v)?;
    let st = tape.matmul(mt, text)?;
    let sv = tape.matmul(mv, video)?;
    let sum = tape.add(st, sv)?;
    tape.scale(sum, 1.0 / count as f64)
}

/// Fixed index selection with no gradient path into any scorer.
pub fn select_fixed(
    tape: &mut Tape,
    text_low: Var,
    video_low: Var,
    text_indices: Vec<usize>,
    video_indices: Vec<usize>,
) -> Result<SharedSelection> {
    let (n, m) = (tape.shape(text_low).0, tape.shape(video_low).0);
    if text_indices.iter().any(|&i| i >= n) || video_indices.iter().any(|&i| i >= m) {
        return Err(Error::Config("selected index out of range".into()));
    }
    let count = text_indices.len() + video_indices.len();
    let mt = tape.input(Tensor2::col_vector(&indicator(n, &text_indices)));
    let mv = tape.input(Tensor2::col_vector(&indicator(m, &video_indices)));
    let pooled = masked_mean(tape, text_low, video_low, mt, mv, count)?;
    Ok(SharedSelection { pooled, text_indices, video_indices })
}

/// `k` distinct indices drawn uniformly from `0..len`, in draw order.
pub fn random_indices(len: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..k.min(len) {
        let j = rng.random_range(i..len);
        pool.swap(i, j);
    }
    pool.truncate(k.min(len));
    pool
}

/// Rows ranked by cosine similarity to `target`, best `k` first.
pub fn cosine_top_k(rows: &Tensor2, target: &[f64], k: usize) -> Vec<usize> {
    let sims: Vec<f64> = (0..rows.rows()).map(|r| cosine(rows.row(r), target)).collect();
    top_k_indices(&sims, k)
}

/// `sigmoid((pooled ⊕ low_i) · W + b)` for every row i.
pub fn gate(tape: &mut Tape, store: &ParamStore, pooled: Var, low: Var, head: &Affine) -> Result<Var> {
    let d = tape.shape(low).1;
    if tape.shape(pooled) != (1, d) {
        return Err(Error::dim("gate", format!("pooled {:?} for rows of width {d}", tape.shape(pooled))));
    }
    head.check_shape("gate", 2 * d, d)?;
    let joined = tape.prepend_broadcast(pooled, low)?;
    let pre = head.forward(tape, store, joined)?;
    tape.sigmoid(pre)
}

/// Elementwise `low ⊙ gate`.
pub fn filter(tape: &mut Tape, low: Var, gate: Var) -> Result<Var> {
    if tape.shape(low) != tape.shape(gate) {
        return Err(Error::dim("filter", format!("{:?} vs {:?}", tape.shape(low), tape.shape(gate))));
    }
    tape.mul(low, gate)
}

impl SharedInfoSet {
    pub fn from_indices(text_low: &Tensor2, video_low: &Tensor2, text_indices: Vec<usize>, video_indices: Vec<usize>) -> Result<Self> {
        let t = text_low.gather_rows(&text_indices);
        let v = video_low.gather_rows(&video_indices);
        let selected_rows = crate::diffcore::ops::concat_rows(&[&t, &v])?;
        let pooled = pool_high(&selected_rows)?;
        Ok(Self { selected_rows, text_indices, video_indices, pooled })
    }
}
