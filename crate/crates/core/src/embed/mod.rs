//! Word- and frame-level latent features for one document/video pair.
//!
//! Real multimodal encoders are out of reach here, so features come from an
//! [`Encoder`]: either precomputed embeddings read from disk or a seeded
//! synthetic encoder. Rows are L2-normalized after encoding so cosine geometry
//! carries the semantics.

mod file;
mod synth;

pub use file::{read_record, read_record_file, write_record, write_record_file, RECORD_MAGIC};
pub use synth::{synth_corpus, SynthConfig};

use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::{l2_norm, Tensor2};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedPair {
    /// n×d word features.
    pub text_low: Tensor2,
    /// m×d frame features.
    pub video_low: Tensor2,
    /// Mean of `text_low` rows.
    pub text_high: Vec<f64>,
    /// Mean of `video_low` rows.
    pub video_high: Vec<f64>,
    pub tokens: Vec<String>,
    pub gt_frame: Option<usize>,
    pub gt_sentence: Option<Vec<usize>>,
}

impl EmbeddedPair {
    pub fn new(
        text_low: Tensor2,
        video_low: Tensor2,
        tokens: Vec<String>,
        gt_frame: Option<usize>,
        gt_sentence: Option<Vec<usize>>,
    ) -> Result<Self> {
        if text_low.rows() == 0 || video_low.rows() == 0 {
            return Err(Error::Ingestion(format!(
                "pair needs at least one word and one frame (got {} and {})",
                text_low.rows(),
                video_low.rows()
            )));
        }
        if text_low.cols() != video_low.cols() {
            return Err(Error::Ingestion(format!(
                "embedding width mismatch: text d={}, video d={}",
                text_low.cols(),
                video_low.cols()
            )));
        }
        if tokens.len() != text_low.rows() {
            return Err(Error::Ingestion(format!(
                "{} tokens for {} word rows",
                tokens.len(),
                text_low.rows()
            )));
        }
        if let Some(f) = gt_frame {
            if f >= video_low.rows() {
                return Err(Error::Ingestion(format!("gt frame {f} out of range 0..{}", video_low.rows())));
            }
        }
        if let Some(words) = &gt_sentence {
            if let Some(&bad) = words.iter().find(|&&w| w >= text_low.rows()) {
                return Err(Error::Ingestion(format!("gt word {bad} out of range 0..{}", text_low.rows())));
            }
        }
        if !text_low.is_finite() || !video_low.is_finite() {
            return Err(Error::Ingestion("non-finite embedding value".into()));
        }
        let text_high = pool_high(&text_low)?;
        let video_high = pool_high(&video_low)?;
        Ok(Self { text_low, video_low, text_high, video_high, tokens, gt_frame, gt_sentence })
    }

    pub fn n_words(&self) -> usize {
        self.text_low.rows()
    }

    pub fn m_frames(&self) -> usize {
        self.video_low.rows()
    }

    pub fn dim(&self) -> usize {
        self.text_low.cols()
    }

    /// Reference summary tokens, in document order.
    pub fn reference_tokens(&self) -> Vec<&str> {
        self.gt_sentence
            .as_ref()
            .map(|ws| ws.iter().map(|&i| self.tokens[i].as_str()).collect())
            .unwrap_or_default()
    }
}

/// Mean over rows.
pub fn pool_high(low: &Tensor2) -> Result<Vec<f64>> {
    if low.rows() == 0 {
        return Err(Error::dim("pool_high", "empty input"));
    }
    let mut out = vec![0.0; low.cols()];
    for r in 0..low.rows() {
        for (o, v) in out.iter_mut().zip(low.row(r)) {
            *o += v;
        }
    }
    let n = low.rows() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Scales every nonzero row to unit Euclidean length.
pub fn normalize_rows(t: &mut Tensor2) {
    for r in 0..t.rows() {
        let norm = l2_norm(t.row(r));
        if norm > 0.0 {
            t.row_mut(r).iter_mut().for_each(|v| *v /= norm);
        }
    }
}

/// A pair before encoding: whitespace tokens and per-frame descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPair {
    pub tokens: Vec<String>,
    pub frames: Vec<Vec<f64>>,
    pub gt_frame: Option<usize>,
    pub gt_sentence: Option<Vec<usize>>,
}

impl RawPair {
    pub fn from_text(document: &str, frames: Vec<Vec<f64>>) -> Self {
        Self {
            tokens: document.split_whitespace().map(str::to_string).collect(),
            frames,
            gt_frame: None,
            gt_sentence: None,
        }
    }
}

pub trait Encoder {
    fn encode_text(&self, tokens: &[String]) -> Result<Tensor2>;
    fn encode_video(&self, frames: &[Vec<f64>]) -> Result<Tensor2>;
}

/// Deterministic stand-in encoder: each distinct token maps to a seeded
/// Gaussian vector, and frame descriptors go through a seeded random
/// projection.
#[derive(Clone, Debug)]
pub struct SyntheticEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl SyntheticEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

impl Encoder for SyntheticEncoder {
    fn encode_text(&self, tokens: &[String]) -> Result<Tensor2> {
        let mut out = Tensor2::zeros(tokens.len(), self.dim);
        for (r, tok) in tokens.iter().enumerate() {
            let mut g = rng::stream(self.seed, &format!("token:{tok}"), 0);
            for v in out.row_mut(r) {
                *v = StandardNormal.sample(&mut g);
            }
        }
        Ok(out)
    }

    fn encode_video(&self, frames: &[Vec<f64>]) -> Result<Tensor2> {
        let width = frames.first().map_or(0, Vec::len);
        let mut g = rng::stream(self.seed, "frame-projection", width as u64);
        let proj: Vec<f64> = (0..width * self.dim).map(|_| StandardNormal.sample(&mut g)).collect();
        let mut out = Tensor2::zeros(frames.len(), self.dim);
        for (r, f) in frames.iter().enumerate() {
            if f.len() != width {
                return Err(Error::Ingestion(format!(
                    "frame {r} descriptor has {} values, expected {width}",
                    f.len()
                )));
            }
            let row = out.row_mut(r);
            for (i, &x) in f.iter().enumerate() {
                for (o, p) in row.iter_mut().zip(&proj[i * self.dim..(i + 1) * self.dim]) {
                    *o += x * p;
                }
            }
        }
        Ok(out)
    }
}

/// Serves embeddings that were computed elsewhere.
#[derive(Clone, Debug)]
pub struct PrecomputedEncoder {
    pub text: Tensor2,
    pub video: Tensor2,
}

impl Encoder for PrecomputedEncoder {
    fn encode_text(&self, tokens: &[String]) -> Result<Tensor2> {
        if tokens.len() != self.text.rows() {
            return Err(Error::Ingestion(format!(
                "{} tokens but {} precomputed word rows",
                tokens.len(),
                self.text.rows()
            )));
        }
        Ok(self.text.clone())
    }

    fn encode_video(&self, frames: &[Vec<f64>]) -> Result<Tensor2> {
        if frames.len() != self.video.rows() {
            return Err(Error::Ingestion(format!(
                "{} frames but {} precomputed frame rows",
                frames.len(),
                self.video.rows()
            )));
        }
        Ok(self.video.clone())
    }
}

/// Runs `encoder` on both modalities, normalizes rows and pools.
pub fn encode_pair(source: &RawPair, encoder: &dyn Encoder) -> Result<EmbeddedPair> {
    let mut text = encoder.encode_text(&source.tokens)?;
    let mut video = encoder.encode_video(&source.frames)?;
    if text.cols() != video.cols() {
        return Err(Error::Ingestion(format!(
            "encoder produced d={} for text but d={} for video",
            text.cols(),
            video.cols()
        )));
    }
    normalize_rows(&mut text);
    normalize_rows(&mut video);
    EmbeddedPair::new(text, video, source.tokens.clone(), source.gt_frame, source.gt_sentence.clone())
}
