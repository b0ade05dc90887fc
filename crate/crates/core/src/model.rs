//! The full summarizer: shared-information gating, fusion, decoders and the
//! unsupervised loss for one pair.

use std::fmt;
use std::str::FromStr;

use crate::decode::{self, OrderMode, SummaryPair};
use crate::diffcore::{ParamStore, Tape, Tensor2, Var};
use crate::embed::EmbeddedPair;
use crate::error::{Error, Result};
use crate::fusion::{self, CrossAttention, Positions, StackConfig, TransformerStack};
use crate::layers::Affine;
use crate::loss::{self, BigramLm, LossTerms, LossWeights, SinkhornConfig, SinkhornInfo, UnigramTable};
use crate::nfdt::{self, NfdtConfig, NfdtParams, Selection};
use crate::rng;

/// Model structure alternatives compared by the ablation harness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Variant {
    #[default]
    Full,
    /// Pool every row of both modalities instead of the top-k.
    NoSharedSelection,
    /// Top-k on the plain softmax, with no Gumbel noise.
    PlainSoftmax,
    /// Raw features skip the gates.
    NoGate,
    /// Seeded uniform choice of k rows per modality.
    RandomSelector,
    /// Rows ranked by cosine similarity to the other modality's pooled feature.
    Cosine,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoSharedSelection,
        Variant::PlainSoftmax,
        Variant::NoGate,
        Variant::RandomSelector,
        Variant::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSharedSelection => "no-shared-selection",
            Variant::PlainSoftmax => "plain-softmax",
            Variant::NoGate => "no-gate",
            Variant::RandomSelector => "random-selector",
            Variant::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::Config(format!("unknown variant {s:?}; accepted: {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub nfdt: NfdtConfig,
    pub stack: StackConfig,
    pub positions: bool,
    pub max_len: usize,
    pub max_words: usize,
    pub order: OrderMode,
    pub sinkhorn: SinkhornConfig,
    pub weights: LossWeights,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            nfdt: NfdtConfig::default(),
            stack: StackConfig::default(),
            positions: true,
            max_len: 64,
            max_words: decode::DEFAULT_MAX_WORDS,
            order: OrderMode::Score,
            sinkhorn: SinkhornConfig::default(),
            weights: LossWeights::default(),
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    /// Config with hidden size `d` everywhere.
    pub fn with_dim(d: usize) -> Self {
        let mut c = Self::default();
        c.d = d;
        c.stack.d = d;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("model.d must be at least 1".into()));
        }
        if self.stack.d != self.d {
            return Err(Error::Config(format!("stack width {} differs from model.d {}", self.stack.d, self.d)));
        }
        if self.max_words == 0 {
            return Err(Error::Config("decode.max_words must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("model.max_len must be at least 1".into()));
        }
        self.nfdt.validate()?;
        self.stack.validate()?;
        self.sinkhorn.validate()?;
        self.weights.validate()
    }
}

/// Language models behind the fluency term.
#[derive(Clone, Debug, PartialEq)]
pub struct Fluency {
    pub lm: BigramLm,
    pub unigram: UnigramTable,
}

impl Fluency {
    pub const ALPHA: f64 = 0.1;

    /// Bigram and unigram models over the corpus token sequences.
    pub fn from_corpus(pairs: &[EmbeddedPair]) -> Result<Self> {
        let lm = BigramLm::train(pairs.iter().map(|p| p.tokens.as_slice()), Self::ALPHA)?;
        let unigram = UnigramTable::from_counts(pairs.iter().map(|p| p.tokens.as_slice()))?;
        Ok(Self { lm, unigram })
    }

    pub fn slor(&self, tokens: &[String]) -> Result<f64> {
        loss::slor(tokens, &self.lm, &self.unigram)
    }
}

/// Per-call randomness and selection overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForwardOptions {
    /// Gumbel perturbations for the text and video scores. `None` = no noise.
    pub noise: Option<(Vec<f64>, Vec<f64>)>,
    pub selection: Option<Selection>,
    /// Stream index for the random-selector variant.
    pub draw: u64,
}

#[derive(Clone, Debug)]
pub struct PairOutput {
    pub loss: Var,
    pub terms: LossTerms,
    pub total: f64,
    pub summary: SummaryPair,
    pub text_indices: Vec<usize>,
    pub video_indices: Vec<usize>,
    /// Softmax probabilities (before the top-k) that drive the selection.
    pub text_select_probs: Vec<f64>,
    pub video_select_probs: Vec<f64>,
    pub sinkhorn: [SinkhornInfo; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub seed: u64,
    nfdt: NfdtParams,
    text_context: TransformerStack,
    video_context: TransformerStack,
    cross: CrossAttention,
    fuse_head: Affine,
    text_guide: TransformerStack,
    video_guide: TransformerStack,
    text_decoder: Affine,
    video_decoder: Affine,
    text_positions: Option<Positions>,
    video_positions: Option<Positions>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let mut store = ParamStore::new();
        let mut g = rng::stream(seed, "init", 0);
        let nfdt = NfdtParams::new(&mut store, d, &mut g);
        let (text_positions, video_positions) = if config.positions {
            (
                Some(Positions::new(&mut store, "pos.text", config.max_len, d, &mut g)),
                Some(Positions::new(&mut store, "pos.video", config.max_len, d, &mut g)),
            )
        } else {
            (None, None)
        };
        let text_context = TransformerStack::new(&mut store, "ctx.text", config.stack.clone(), &mut g)?;
        let video_context = TransformerStack::new(&mut store, "ctx.video", config.stack.clone(), &mut g)?;
        let cross = CrossAttention::new(&mut store, d, &mut g);
        let fuse_head = Affine::new(&mut store, "fuse", d, d, 1.0 / (d as f64).sqrt(), &mut g);
        let text_guide = TransformerStack::new(&mut store, "guide.text", config.stack.clone(), &mut g)?;
        let video_guide = TransformerStack::new(&mut store, "guide.video", config.stack.clone(), &mut g)?;
        let dec_std = 1.0 / (d as f64).sqrt();
        let text_decoder = Affine::new(&mut store, "decode.text", d, 1, dec_std, &mut g);
        let video_decoder = Affine::new(&mut store, "decode.video", d, 1, dec_std, &mut g);
        Ok(Self {
            config,
            store,
            seed,
            nfdt,
            text_context,
            video_context,
            cross,
            fuse_head,
            text_guide,
            video_guide,
            text_decoder,
            video_decoder,
            text_positions,
            video_positions,
        })
    }

    /// Gumbel noise for one training step.
    pub fn sample_noise(&self, pair: &EmbeddedPair, stream_index: u64) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.config.nfdt.noise || self.config.variant == Variant::PlainSoftmax {
            return None;
        }
        let mut g = rng::stream(self.seed, "gumbel", stream_index);
        let t = nfdt::gumbel_noise(pair.n_words(), &mut g);
        let v = nfdt::gumbel_noise(pair.m_frames(), &mut g);
        Some((t, v))
    }

    /// Runs one pair through the model on `tape`, using `store` for weights.
    pub fn forward_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        pair: &EmbeddedPair,
        opts: &ForwardOptions,
        fluency: Option<&Fluency>,
    ) -> Result<PairOutput> {
        let cfg = &self.config;
        let (n, m, d) = (pair.n_words(), pair.m_frames(), pair.dim());
        if d != cfg.d {
            return Err(Error::dim("model", format!("pair has d={d}, model expects {}", cfg.d)));
        }
        let x_t = tape.try_input(pair.text_low.clone())?;
        let x_v = tape.try_input(pair.video_low.clone())?;
        let h_t = tape.try_input(Tensor2::row_vector(&pair.text_high))?;
        let h_v = tape.try_input(Tensor2::row_vector(&pair.video_high))?;

        // shared salient information
        let s_t = nfdt::salience(tape, store, x_t, &self.nfdt.text_score)?;
        let s_v = nfdt::salience(tape, store, x_v, &self.nfdt.video_score)?;
        let (noise_t, noise_v) = match &opts.noise {
            Some((t, v)) => (t.clone(), v.clone()),
            None => (vec![0.0; n], vec![0.0; m]),
        };
        let p_t = nfdt::gumbel_softmax(tape, s_t, &noise_t, cfg.nfdt.tau)?;
        let p_v = nfdt::gumbel_softmax(tape, s_v, &noise_v, cfg.nfdt.tau)?;
        let k = cfg.nfdt.k_for(n, m);
        let shared = match cfg.variant {
            Variant::Full | Variant::PlainSoftmax | Variant::NoGate => {
                let sel = opts.selection.clone().unwrap_or(Selection::TopK);
                nfdt::select_topk_shared(tape, x_t, x_v, p_t, p_v, k, &sel)?
            }
            Variant::NoSharedSelection => nfdt::select_fixed(tape, x_t, x_v, (0..n).collect(), (0..m).collect())?,
            Variant::RandomSelector => {
                let mut g = rng::stream(self.seed, "random-selector", opts.draw);
                let ti = nfdt::random_indices(n, k, &mut g);
                let vi = nfdt::random_indices(m, k, &mut g);
                nfdt::select_fixed(tape, x_t, x_v, ti, vi)?
            }
            Variant::Cosine => {
                let ti = nfdt::cosine_top_k(&pair.text_low, &pair.video_high, k);
                let vi = nfdt::cosine_top_k(&pair.video_low, &pair.text_high, k);
                nfdt::select_fixed(tape, x_t, x_v, ti, vi)?
            }
        };
        let (clean_t, clean_v) = if cfg.variant == Variant::NoGate {
            (x_t, x_v)
        } else {
            let g_t = nfdt::gate(tape, store, shared.pooled, x_t, &self.nfdt.text_gate)?;
            let g_v = nfdt::gate(tape, store, shared.pooled, x_v, &self.nfdt.video_gate)?;
            (nfdt::filter(tape, x_t, g_t)?, nfdt::filter(tape, x_v, g_v)?)
        };

        // unimodal context
        let clean_t = match &self.text_positions {
            Some(p) => p.add(tape, store, clean_t)?,
            None => clean_t,
        };
        let clean_v = match &self.video_positions {
            Some(p) => p.add(tape, store, clean_v)?,
            None => clean_v,
        };
        let c_t = fusion::unimodal_context(tape, store, clean_t, h_t, &self.text_context)?;
        let c_v = fusion::unimodal_context(tape, store, clean_v, h_v, &self.video_context)?;

        // cross-modal interaction
        let (a_v2t, a_t2v) = fusion::cross_attend(tape, store, c_v, c_t, &self.cross)?;
        let x_o = fusion::fuse(tape, store, a_v2t, a_t2v, &self.fuse_head)?;
        let x_to = fusion::guide(tape, store, x_o, c_t, &self.text_guide)?;
        let x_vo = fusion::guide(tape, store, x_o, c_v, &self.video_guide)?;

        // decoders
        let word_probs = decode::score_probs(tape, store, x_to, &self.text_decoder)?;
        let frame_probs = decode::score_probs(tape, store, x_vo, &self.video_decoder)?;
        let wp = tape.value(word_probs).data().to_vec();
        let fp = tape.value(frame_probs).data().to_vec();
        let (word_indices, word_scores) = decode::select_words(&wp, cfg.max_words.min(n), cfg.order)?;
        let frame_index = decode::frame_from_probs(&fp)?;
        let summary = SummaryPair { word_indices, word_scores, frame_index, frame_scores: fp };

        // summary features: decoder-weighted pools of the guided rows;
        // consistency compares pools of the selected input rows, which the
        // stacks cannot move
        let wt = tape.transpose(word_probs)?;
        let text_summary = tape.matmul(wt, x_to)?;
        let text_pick = tape.matmul(wt, x_t)?;
        let ft = tape.transpose(frame_probs)?;
        let video_summary = tape.matmul(ft, x_vo)?;
        let video_pick = tape.matmul(ft, x_v)?;

        let (l_t, i_t) = loss::wasserstein(tape, h_t, text_summary, &cfg.sinkhorn)?;
        let (l_v, i_v) = loss::wasserstein(tape, h_v, video_summary, &cfg.sinkhorn)?;
        let (l_o, i_o) = loss::wasserstein(tape, text_pick, video_pick, &cfg.sinkhorn)?;

        let slor = match fluency {
            Some(f) if cfg.weights.fluency != 0.0 => {
                let words: Vec<String> = summary.word_indices.iter().map(|&i| pair.tokens[i].clone()).collect();
                f.slor(&words)?
            }
            _ => 0.0,
        };
        let terms = LossTerms {
            text: tape.value(l_t).item()?,
            video: tape.value(l_v).item()?,
            cross: tape.value(l_o).item()?,
            fluency: -slor,
        };
        let w = &cfg.weights;
        let a = tape.scale(l_t, w.text)?;
        let b = tape.scale(l_v, w.video)?;
        let c = tape.scale(l_o, w.cross)?;
        let fl = tape.input(Tensor2::scalar(w.fluency * terms.fluency));
        let ab = tape.add(a, b)?;
        let abc = tape.add(ab, c)?;
        let loss = tape.add(abc, fl)?;
        let total = tape.value(loss).item()?;
        Ok(PairOutput {
            loss,
            terms,
            total,
            summary,
            text_indices: shared.text_indices,
            video_indices: shared.video_indices,
            text_select_probs: tape.value(p_t).data().to_vec(),
            video_select_probs: tape.value(p_v).data().to_vec(),
            sinkhorn: [i_t, i_v, i_o],
        })
    }

    /// Noise-free inference.
    pub fn summarize(&self, pair: &EmbeddedPair, draw: u64) -> Result<SummaryPair> {
        let mut tape = Tape::no_grad();
        let opts = ForwardOptions { draw, ..ForwardOptions::default() };
        Ok(self.forward_with(&self.store, &mut tape, pair, &opts, None)?.summary)
    }

    /// Frozen selection matching the live forward pass under `opts`, for
    /// gradient checks of the straight-through path.
    pub fn frozen_selection(&self, pair: &EmbeddedPair, opts: &ForwardOptions) -> Result<Selection> {
        let mut tape = Tape::no_grad();
        let out = self.forward_with(&self.store, &mut tape, pair, opts, None)?;
        Ok(Selection::Frozen {
            text_indices: out.text_indices,
            video_indices: out.video_indices,
            text_baseline: out.text_select_probs,
            video_baseline: out.video_select_probs,
        })
    }
}
