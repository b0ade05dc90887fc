//! Extreme decoders: a short extractive sentence and one cover frame.

use std::fmt;
use std::str::FromStr;

use crate::diffcore::{ops, Axis, ParamStore, Tape, Tensor2, Var};
use crate::error::{Error, Result};
use crate::layers::Affine;

pub const DEFAULT_MAX_WORDS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OrderMode {
    /// Descending word probability.
    #[default]
    Score,
    /// Document position.
    Position,
}

impl FromStr for OrderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(Self::Score),
            "position" => Ok(Self::Position),
            other => Err(Error::Config(format!("order mode {other:?}; accepted: score, position"))),
        }
    }
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Score => "score",
            Self::Position => "position",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryPair {
    pub word_indices: Vec<usize>,
    pub word_scores: Vec<f64>,
    pub frame_index: usize,
    pub frame_scores: Vec<f64>,
}

impl SummaryPair {
    /// `FRAME <i>` and `SENT <words>` lines.
    pub fn record(&self, tokens: &[String]) -> String {
        let words: Vec<&str> = self.word_indices.iter().map(|&i| tokens[i].as_str()).collect();
        format!("FRAME {}\nSENT {}\n", self.frame_index, words.join(" "))
    }
}

/// Softmax over rows of the d→1 head output, as an n×1 column.
pub fn score_probs(tape: &mut Tape, store: &ParamStore, x: Var, head: &Affine) -> Result<Var> {
    let (rows, d) = tape.shape(x);
    if rows == 0 {
        return Err(Error::dim("decode", "no rows to score"));
    }
    head.check_shape("decode", d, 1)?;
    let s = head.forward(tape, store, x)?;
    tape.softmax(s, Axis::Col)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Picks `k` words from probabilities `probs`, ordered per `mode`.
pub fn select_words(probs: &[f64], k: usize, mode: OrderMode) -> Result<(Vec<usize>, Vec<f64>)> {
    if k == 0 || k > probs.len() {
        return Err(Error::Config(format!("summary length {k} must be in 1..={}", probs.len())));
    }
    let mut idx = crate::nfdt::top_k_indices(probs, k);
    if mode == OrderMode::Position {
        idx.sort_unstable();
    }
    let scores = idx.iter().map(|&i| probs[i]).collect();
    Ok((idx, scores))
}

/// Word selection from guided text features `x_to` (n×d).
pub fn decode_text(x_to: &Tensor2, store: &ParamStore, head: &Affine, k: usize, mode: OrderMode) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut tape = Tape::no_grad();
    let x = tape.try_input(x_to.clone())?;
    let p = score_probs(&mut tape, store, x, head)?;
    select_words(tape.value(p).data(), k, mode)
}

/// Cover frame from guided video features `x_vo` (m×d): `(index, probabilities)`.
pub fn decode_frame(x_vo: &Tensor2, store: &ParamStore, head: &Affine) -> Result<(usize, Vec<f64>)> {
    let mut tape = Tape::no_grad();
    let x = tape.try_input(x_vo.clone())?;
    let p = score_probs(&mut tape, store, x, head)?;
    let probs = tape.value(p).data().to_vec();
    Ok((frame_from_probs(&probs)?, probs))
}

pub fn frame_from_probs(probs: &[f64]) -> Result<usize> {
    argmax(probs).ok_or_else(|| Error::dim("decode_frame", "no frames"))
}

/// Frame probabilities straight from raw scores.
pub fn frame_probs_from_scores(scores: &[f64]) -> Vec<f64> {
    ops::softmax_vec(scores)
}
