//! Flat `section.key=value` run configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decode::OrderMode;
use crate::embed::SynthConfig;
use crate::error::{Error, Result};
use crate::eval::{parse_variants, EvalConfig};
use crate::model::{ModelConfig, Variant};
use crate::train::TrainConfig;

pub const KEYS: &[&str] = &[
    "run.seed",
    "synth.size",
    "synth.n_words",
    "synth.m_frames",
    "synth.d",
    "synth.shared_signal_dim",
    "synth.noise_scale",
    "corpus.dir",
    "model.d",
    "model.layers",
    "model.heads",
    "model.ffn_mult",
    "model.residual_init",
    "model.positions",
    "model.max_len",
    "model.variant",
    "nfdt.tau",
    "nfdt.k_ratio",
    "nfdt.noise",
    "decode.max_words",
    "decode.order",
    "sinkhorn.epsilon",
    "sinkhorn.max_iters",
    "sinkhorn.tol",
    "loss.text",
    "loss.video",
    "loss.cross",
    "loss.fluency",
    "lm.unigram",
    "train.lr",
    "train.weight_decay",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.epochs",
    "train.batch_size",
    "train.clip",
    "train.resume",
    "eval.checkpoint",
    "eval.fa_window",
    "eval.iou_half_width",
    "ablate.variants",
    "sweep.ratios",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus_size: usize,
    pub synth: SynthConfig,
    pub corpus_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub unigram: Option<PathBuf>,
    pub train: TrainConfig,
    pub resume: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub eval: EvalConfig,
    pub variants: Vec<Variant>,
    pub ratios: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus_size: 200,
            synth: SynthConfig::default(),
            corpus_dir: None,
            model: ModelConfig::default(),
            unigram: None,
            train: TrainConfig::default(),
            resume: None,
            checkpoint: None,
            eval: EvalConfig::default(),
            variants: Variant::ALL.to_vec(),
            ratios: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: expected {what}, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Path(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "run.seed" => self.seed = parse(key, v, "an unsigned integer")?,
            "synth.size" => self.corpus_size = parse(key, v, "a count")?,
            "synth.n_words" => self.synth.n_words = parse(key, v, "a count")?,
            "synth.m_frames" => self.synth.m_frames = parse(key, v, "a count")?,
            "synth.d" => self.synth.d = parse(key, v, "a count")?,
            "synth.shared_signal_dim" => self.synth.shared_signal_dim = parse(key, v, "a count")?,
            "synth.noise_scale" => self.synth.noise_scale = parse(key, v, "a real")?,
            "corpus.dir" => self.corpus_dir = Some(PathBuf::from(v)),
            "model.d" => {
                m.d = parse(key, v, "a count")?;
                m.stack.d = m.d;
            }
            "model.layers" => m.stack.layers = parse(key, v, "a count")?,
            "model.heads" => m.stack.heads = parse(key, v, "a count")?,
            "model.ffn_mult" => m.stack.ffn_mult = parse(key, v, "a count")?,
            "model.residual_init" => m.stack.residual_init = parse(key, v, "a real")?,
            "model.positions" => m.positions = parse_bool(key, v)?,
            "model.max_len" => m.max_len = parse(key, v, "a count")?,
            "model.variant" => m.variant = v.parse()?,
            "nfdt.tau" => m.nfdt.tau = parse(key, v, "a real")?,
            "nfdt.k_ratio" => m.nfdt.k_ratio = parse(key, v, "a real")?,
            "nfdt.noise" => m.nfdt.noise = parse_bool(key, v)?,
            "decode.max_words" => m.max_words = parse(key, v, "a count")?,
            "decode.order" => m.order = v.parse::<OrderMode>()?,
            "sinkhorn.epsilon" => m.sinkhorn.epsilon = parse(key, v, "a real")?,
            "sinkhorn.max_iters" => m.sinkhorn.max_iters = parse(key, v, "a count")?,
            "sinkhorn.tol" => m.sinkhorn.tol = parse(key, v, "a real")?,
            "loss.text" => m.weights.text = parse(key, v, "a real")?,
            "loss.video" => m.weights.video = parse(key, v, "a real")?,
            "loss.cross" => m.weights.cross = parse(key, v, "a real")?,
            "loss.fluency" => m.weights.fluency = parse(key, v, "a real")?,
            "lm.unigram" => self.unigram = Some(PathBuf::from(v)),
            "train.lr" => self.train.learning_rate = parse(key, v, "a real")?,
            "train.weight_decay" => self.train.weight_decay = parse(key, v, "a real")?,
            "train.beta1" => self.train.beta1 = parse(key, v, "a real")?,
            "train.beta2" => self.train.beta2 = parse(key, v, "a real")?,
            "train.eps" => self.train.eps = parse(key, v, "a real")?,
            "train.epochs" => self.train.epochs = parse(key, v, "a count")?,
            "train.batch_size" => self.train.batch_size = parse(key, v, "a count")?,
            "train.clip" => self.train.clip_norm = parse(key, v, "a real")?,
            "train.resume" => self.resume = Some(PathBuf::from(v)),
            "eval.checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
            "eval.fa_window" => self.eval.fa_window = parse(key, v, "a count")?,
            "eval.iou_half_width" => self.eval.iou_half_width = parse(key, v, "a count")?,
            "ablate.variants" => self.variants = parse_variants(v)?,
            "sweep.ratios" => {
                self.ratios = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s, "a comma-separated list of reals"))
                    .collect::<Result<_>>()?
            }
            _ => {
                return Err(Error::Config(format!("unknown key {key:?}; accepted keys: {}", KEYS.join(", "))));
            }
        }
        Ok(())
    }

    /// Cross-field checks, run once every key is applied.
    pub fn finish(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
        self.synth.validate()?;
        if self.corpus_size == 0 {
            return Err(Error::Config("synth.size must be at least 1".into()));
        }
        self.model.validate()?;
        self.train.validate()?;
        if self.variants.is_empty() {
            return Err(Error::Config("ablate.variants must name at least one variant".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("sweep.ratios entries must be in (0, 1], got {r}")));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let c = RunConfig::from_text("# nothing\n\n").unwrap();
        assert_eq!(c.train.learning_rate, 0.001);
        assert_eq!(c.model.max_words, 10);
    }

    #[test]
    fn keys_are_applied() {
        let c = RunConfig::from_text("run.seed=7\ntrain.lr = 0.01\nsynth.size=5\nablate.variants=full,no-gate\nsweep.ratios=0.5,1.0\nmodel.d=32\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.synth.seed, 7);
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.corpus_size, 5);
        assert_eq!(c.variants, vec![Variant::Full, Variant::NoGate]);
        assert_eq!(c.ratios, vec![0.5, 1.0]);
        assert_eq!(c.model.stack.d, 32);
    }

    #[test]
    fn unknown_key_names_key_and_alternatives() {
        let err = RunConfig::from_text("train.learning_rate=0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("train.learning_rate"));
        assert!(msg.contains("train.lr"));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["synth.size=0", "sweep.ratios=0.5,1.5", "train.lr=abc", "nfdt.noise=maybe", "noequals", "model.variant=x"] {
            assert!(matches!(RunConfig::from_text(text), Err(Error::Config(_))), "{text}");
        }
    }
}
