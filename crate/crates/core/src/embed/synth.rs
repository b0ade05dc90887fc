//! Planted-signal synthetic corpora.
//!
//! Each corpus fixes an orthonormal basis and splits it into a shared
//! subspace and one distractor subspace per modality. For every pair a shared
//! direction is drawn from the nonnegative cone of the shared subspace and
//! written into exactly one frame (`gt_frame`) and a contiguous run of words
//! (`gt_sentence`). Every other row is one of a few per-pair distractor
//! directions from its own modality's subspace. All rows get isotropic
//! Gaussian noise with expected norm `noise_scale`, then unit normalization.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{normalize_rows, EmbeddedPair};
use crate::diffcore::Tensor2;
use crate::error::{Error, Result};
use crate::rng;

/// Distinct distractor directions per modality within one pair.
const DISTRACTORS_PER_PAIR: usize = 2;
const TOPIC_VOCAB: usize = 40;
const FILLER_VOCAB: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_words: usize,
    pub m_frames: usize,
    pub d: usize,
    pub shared_signal_dim: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_words: 20, m_frames: 12, d: 64, shared_signal_dim: 8, noise_scale: 0.1, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_words == 0 || self.m_frames == 0 || self.d == 0 {
            return Err(Error::Config("synth n_words, m_frames and d must be at least 1".into()));
        }
        if self.shared_signal_dim == 0 || self.shared_signal_dim > self.d {
            return Err(Error::Config(format!(
                "synth shared_signal_dim must be in 1..={}, got {}",
                self.d, self.shared_signal_dim
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!("synth noise_scale must be >= 0, got {}", self.noise_scale)));
        }
        Ok(())
    }

    /// Length of the planted word run.
    pub fn sentence_len(&self) -> usize {
        (self.n_words / 4).max(1)
    }
}

fn gaussian(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Gram-Schmidt on Gaussian vectors; returns `d` orthonormal rows.
fn random_basis(rng: &mut impl Rng, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v = gaussian(rng, d);
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Random combination of `vectors` with coefficients drawn by `coef`.
fn combine(vectors: &[Vec<f64>], d: usize, mut coef: impl FnMut() -> f64) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for v in vectors {
        let c = coef();
        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    unit(out)
}

struct Subspaces {
    shared: Vec<Vec<f64>>,
    text: Vec<Vec<f64>>,
    video: Vec<Vec<f64>>,
}

fn subspaces(cfg: &SynthConfig) -> Subspaces {
    let mut g = rng::stream(cfg.seed, "corpus-basis", 0);
    let basis = random_basis(&mut g, cfg.d);
    let s = cfg.shared_signal_dim;
    let rest = cfg.d - s;
    let shared = basis[..s].to_vec();
    if rest >= 2 {
        let width = (rest / 2).min(s.max(1));
        Subspaces {
            shared,
            text: basis[s..s + width].to_vec(),
            video: basis[s + width..s + 2 * width].to_vec(),
        }
    } else {
        // no room for orthogonal distractors; fall back to the full space
        Subspaces { shared, text: basis.clone(), video: basis }
    }
}

/// Generates `size` planted-signal pairs, deterministically from `cfg.seed`.
pub fn synth_corpus(cfg: &SynthConfig, size: usize) -> Result<Vec<EmbeddedPair>> {
    cfg.validate()?;
    if size == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    let spaces = subspaces(cfg);
    (0..size).map(|i| synth_pair(cfg, &spaces, i)).collect()
}

fn synth_pair(cfg: &SynthConfig, spaces: &Subspaces, index: usize) -> Result<EmbeddedPair> {
    let (n, m, d) = (cfg.n_words, cfg.m_frames, cfg.d);
    let mut g = rng::stream(cfg.seed, "corpus-pair", index as u64);

    let shared = combine(&spaces.shared, d, || {
        let z: f64 = StandardNormal.sample(&mut g);
        z.abs()
    });
    let draw_distractors = |space: &[Vec<f64>], g: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..DISTRACTORS_PER_PAIR).map(|_| combine(space, d, || StandardNormal.sample(g))).collect()
    };
    let text_distractors = draw_distractors(&spaces.text, &mut g);
    let video_distractors = draw_distractors(&spaces.video, &mut g);

    let gt_frame = g.random_range(0..m);
    let span = cfg.sentence_len().min(n);
    let start = g.random_range(0..=n - span);
    let gt_sentence: Vec<usize> = (start..start + span).collect();

    let noise_sd = cfg.noise_scale / (d as f64).sqrt();
    let row = |base: &[f64], g: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        base.iter()
            .map(|b| {
                let z: f64 = StandardNormal.sample(g);
                b + noise_sd * z
            })
            .collect()
    };

    let mut text_rows = Vec::with_capacity(n);
    let mut tokens = Vec::with_capacity(n);
    for w in 0..n {
        if gt_sentence.contains(&w) {
            text_rows.push(row(&shared, &mut g));
            tokens.push(format!("topic{}", g.random_range(0..TOPIC_VOCAB)));
        } else {
            let k = g.random_range(0..DISTRACTORS_PER_PAIR);
            text_rows.push(row(&text_distractors[k], &mut g));
            tokens.push(format!("w{}", g.random_range(0..FILLER_VOCAB)));
        }
    }
    let mut video_rows = Vec::with_capacity(m);
    for f in 0..m {
        if f == gt_frame {
            video_rows.push(row(&shared, &mut g));
        } else {
            let k = g.random_range(0..DISTRACTORS_PER_PAIR);
            video_rows.push(row(&video_distractors[k], &mut g));
        }
    }

    let mut text = Tensor2::from_rows(&text_rows)?;
    let mut video = Tensor2::from_rows(&video_rows)?;
    normalize_rows(&mut text);
    normalize_rows(&mut video);
    EmbeddedPair::new(text, video, tokens, Some(gt_frame), Some(gt_sentence))
}
