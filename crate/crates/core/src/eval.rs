//! Evaluation metrics and the ablation harness.
//!
//! ROUGE here is lowercase exact-token matching with no stemming and no
//! stopword removal. Frame metrics use integer frame windows.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::decode::SummaryPair;
use crate::embed::EmbeddedPair;
use crate::error::{Error, Result};
use crate::model::{Fluency, Model, ModelConfig, Variant};
use crate::train::{self, TraceRow, TrainConfig};

pub const ROUGE_NOTE: &str = "ROUGE: lowercase exact tokens, no stemming, no stopword removal";

fn lower(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn f1(overlap: f64, cand: f64, reference: f64) -> f64 {
    if overlap == 0.0 || cand == 0.0 || reference == 0.0 {
        return 0.0;
    }
    let p = overlap / cand;
    let r = overlap / reference;
    2.0 * p * r / (p + r)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N F1 with clipped n-gram counts.
pub fn rouge_n(candidate: &[&str], reference: &[&str], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("rouge n must be at least 1".into()));
    }
    let c = lower(candidate);
    let r = lower(reference);
    let cc = ngram_counts(&c, n);
    let rc = ngram_counts(&r, n);
    let overlap: usize = cc.iter().map(|(g, k)| (*k).min(rc.get(g).copied().unwrap_or(0))).sum();
    let total = |m: &HashMap<&[String], usize>| m.values().sum::<usize>() as f64;
    Ok(f1(overlap as f64, total(&cc), total(&rc)))
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l(candidate: &[&str], reference: &[&str]) -> f64 {
    let c = lower(candidate);
    let r = lower(reference);
    f1(lcs_len(&c, &r) as f64, c.len() as f64, r.len() as f64)
}

pub fn frame_hit(pred: usize, gt: usize, window: usize) -> bool {
    pred.abs_diff(gt) <= window
}

/// Hit rate over `(pred, gt)` pairs.
pub fn frame_accuracy(pairs: &[(usize, usize)], window: usize) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().filter(|(p, g)| frame_hit(*p, *g, window)).count() as f64 / pairs.len() as f64
}

/// IoU of the frame windows `[i−h, i+h] ∩ [0, m)`, counted in frames.
pub fn temporal_iou(pred: usize, gt: usize, half_width: usize, m: usize) -> f64 {
    let window = |i: usize| (i.saturating_sub(half_width), (i + half_width).min(m.saturating_sub(1)));
    let (a0, a1) = window(pred);
    let (b0, b1) = window(gt);
    let len = |lo: usize, hi: usize| if hi >= lo { hi - lo + 1 } else { 0 };
    let size_a = if a0 < m { len(a0, a1) } else { 0 };
    let size_b = if b0 < m { len(b0, b1) } else { 0 };
    let inter = if a0.max(b0) < m { len(a0.max(b0), a1.min(b1)) } else { 0 };
    let union = size_a + size_b - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub fa_window: usize,
    pub iou_half_width: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { fa_window: 2, iou_half_width: 2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairMetrics {
    pub frame: usize,
    pub gt_frame: usize,
    pub hit: bool,
    pub iou: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rougel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub fa: f64,
    pub iou: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rougel: f64,
    pub per_pair: Vec<PairMetrics>,
}

impl EvalReport {
    pub const HEADER: &'static str = "variant,fa,iou,r1,r2,rl";

    /// Aggregates per-pair rows by their means.
    pub fn from_pairs(per_pair: Vec<PairMetrics>) -> Self {
        let n = per_pair.len().max(1) as f64;
        let mean = |f: fn(&PairMetrics) -> f64| per_pair.iter().map(f).sum::<f64>() / n;
        Self {
            fa: mean(|p| if p.hit { 1.0 } else { 0.0 }),
            iou: mean(|p| p.iou),
            rouge1: mean(|p| p.rouge1),
            rouge2: mean(|p| p.rouge2),
            rougel: mean(|p| p.rougel),
            per_pair,
        }
    }

    /// `label,fa,iou,r1,r2,rl`.
    pub fn line(&self, label: &str) -> String {
        format!("{label},{:.6},{:.6},{:.6},{:.6},{:.6}", self.fa, self.iou, self.rouge1, self.rouge2, self.rougel)
    }
}

/// Aligned human-readable table of labeled reports.
pub fn render_table(first_column: &str, rows: &[(String, &EvalReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).chain([first_column.len()]).max().unwrap_or(0);
    let mut out = format!("# {ROUGE_NOTE}\n");
    let _ = writeln!(out, "{first_column:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}", "FA", "IoU", "R-1", "R-2", "R-L");
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{label:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}",
            r.fa, r.iou, r.rouge1, r.rouge2, r.rougel
        );
    }
    out
}

/// Scores one summary against a pair's ground truth.
pub fn score_pair(summary: &SummaryPair, pair: &EmbeddedPair, cfg: &EvalConfig) -> Result<PairMetrics> {
    let gt = pair.gt_frame.ok_or_else(|| Error::Ingestion("pair has no ground-truth frame".into()))?;
    let cand: Vec<&str> = summary.word_indices.iter().map(|&i| pair.tokens[i].as_str()).collect();
    let reference = pair.reference_tokens();
    Ok(PairMetrics {
        frame: summary.frame_index,
        gt_frame: gt,
        hit: frame_hit(summary.frame_index, gt, cfg.fa_window),
        iou: temporal_iou(summary.frame_index, gt, cfg.iou_half_width, pair.m_frames()),
        rouge1: rouge_n(&cand, &reference, 1)?,
        rouge2: rouge_n(&cand, &reference, 2)?,
        rougel: rouge_l(&cand, &reference),
    })
}

/// Noise-free summaries and metrics for every pair.
pub fn evaluate(model: &Model, data: &[EmbeddedPair], cfg: &EvalConfig) -> Result<(EvalReport, Vec<SummaryPair>)> {
    let mut summaries = Vec::with_capacity(data.len());
    let mut rows = Vec::with_capacity(data.len());
    for (i, pair) in data.iter().enumerate() {
        let s = model.summarize(pair, i as u64)?;
        rows.push(score_pair(&s, pair, cfg)?);
        summaries.push(s);
    }
    Ok((EvalReport::from_pairs(rows), summaries))
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: EvalReport,
    pub trace: Vec<TraceRow>,
}

/// Trains and evaluates each variant with identical seeds and data.
pub fn ablation_run(
    data: &[EmbeddedPair],
    variants: &[Variant],
    model_cfg: &ModelConfig,
    model_seed: u64,
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
    fluency: Option<&Fluency>,
) -> Result<Vec<AblationRow>> {
    variants
        .iter()
        .map(|&variant| {
            let mut cfg = model_cfg.clone();
            cfg.variant = variant;
            let model = Model::new(cfg, model_seed)?;
            let (model, trace) = train::fit(model, data, train_cfg, fluency)?;
            let (report, _) = evaluate(&model, data, eval_cfg)?;
            Ok(AblationRow { variant, report, trace })
        })
        .collect()
}

pub fn parse_variants(list: &str) -> Result<Vec<Variant>> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}
