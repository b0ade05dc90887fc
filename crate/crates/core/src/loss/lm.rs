//! Language-model interface, unigram tables and SLOR.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Scores a whole token sequence.
pub trait LanguageModel {
    fn log_prob(&self, tokens: &[String]) -> Result<f64>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UnigramTable {
    probs: HashMap<String, f64>,
}

impl UnigramTable {
    /// Normalizes nonnegative weights; zero-weight tokens are dropped.
    pub fn from_weights(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut probs = HashMap::new();
        for (tok, w) in entries {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Ingestion(format!("unigram weight for {tok:?} is {w}")));
            }
            if w > 0.0 {
                *probs.entry(tok).or_insert(0.0) += w;
            }
        }
        let total: f64 = probs.values().sum();
        if total <= 0.0 {
            return Err(Error::Ingestion("unigram table is empty".into()));
        }
        probs.values_mut().for_each(|p| *p /= total);
        Ok(Self { probs })
    }

    /// Relative frequencies over token sequences.
    pub fn from_counts<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Result<Self> {
        let mut counts: HashMap<String, f64> = HashMap::new();
        for s in sentences {
            for t in s {
                *counts.entry(t.to_lowercase()).or_insert(0.0) += 1.0;
            }
        }
        Self::from_weights(counts)
    }

    /// Parses `<token> <probability>` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(tok), Some(p), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Ingestion(format!("unigram line {}: expected `<token> <probability>`", n + 1)));
            };
            let p: f64 = p.parse().map_err(|_| Error::Ingestion(format!("unigram line {}: bad probability {p:?}", n + 1)))?;
            entries.push((tok.to_lowercase(), p));
        }
        Self::from_weights(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Path(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut entries: Vec<(&String, &f64)> = self.probs.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        entries.iter().map(|(t, p)| format!("{t} {p:?}\n")).collect()
    }

    pub fn prob(&self, token: &str) -> Result<f64> {
        self.probs
            .get(&token.to_lowercase())
            .copied()
            .ok_or_else(|| Error::Vocabulary(format!("token {token:?} has no unigram probability")))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `Σ ln P(t)`.
    pub fn log_prob(&self, tokens: &[String]) -> Result<f64> {
        tokens.iter().map(|t| Ok(self.prob(t)?.ln())).sum()
    }
}

impl LanguageModel for UnigramTable {
    fn log_prob(&self, tokens: &[String]) -> Result<f64> {
        UnigramTable::log_prob(self, tokens)
    }
}

const START: &str = "<s>";

/// Bigram model with add-α smoothing over a closed vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct BigramLm {
    alpha: f64,
    vocab: HashMap<String, usize>,
    context: HashMap<String, f64>,
    pairs: HashMap<(String, String), f64>,
}

impl BigramLm {
    pub fn train<'a>(sentences: impl IntoIterator<Item = &'a [String]>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("bigram alpha must be > 0, got {alpha}")));
        }
        let mut vocab = HashMap::new();
        let mut context: HashMap<String, f64> = HashMap::new();
        let mut pairs: HashMap<(String, String), f64> = HashMap::new();
        for s in sentences {
            let mut prev = START.to_string();
            for t in s {
                let t = t.to_lowercase();
                let next_id = vocab.len();
                vocab.entry(t.clone()).or_insert(next_id);
                *context.entry(prev.clone()).or_insert(0.0) += 1.0;
                *pairs.entry((prev, t.clone())).or_insert(0.0) += 1.0;
                prev = t;
            }
        }
        if vocab.is_empty() {
            return Err(Error::Config("bigram model needs at least one token".into()));
        }
        Ok(Self { alpha, vocab, context, pairs })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// `(count(prev, next) + α) / (count(prev) + α·V)`.
    pub fn conditional(&self, prev: &str, next: &str) -> Result<f64> {
        let next = next.to_lowercase();
        if !self.vocab.contains_key(&next) {
            return Err(Error::Vocabulary(format!("token {next:?} is outside the language-model vocabulary")));
        }
        let prev = prev.to_lowercase();
        let joint = self.pairs.get(&(prev.clone(), next)).copied().unwrap_or(0.0);
        let ctx = self.context.get(&prev).copied().unwrap_or(0.0);
        Ok((joint + self.alpha) / (ctx + self.alpha * self.vocab.len() as f64))
    }
}

impl LanguageModel for BigramLm {
    fn log_prob(&self, tokens: &[String]) -> Result<f64> {
        let mut prev = START;
        let mut total = 0.0;
        for t in tokens {
            total += self.conditional(prev, t)?.ln();
            prev = t;
        }
        Ok(total)
    }
}

/// `(ln P_LM(s) − Σ ln P_U(t)) / |s|`.
pub fn slor(tokens: &[String], lm: &dyn LanguageModel, unigram: &UnigramTable) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Config("SLOR needs at least one token".into()));
    }
    let lp = lm.log_prob(tokens)?;
    let lu = unigram.log_prob(tokens)?;
    Ok((lp - lu) / tokens.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    struct Squared<'a>(&'a UnigramTable);

    impl LanguageModel for Squared<'_> {
        fn log_prob(&self, tokens: &[String]) -> Result<f64> {
            Ok(2.0 * self.0.log_prob(tokens)?)
        }
    }

    #[test]
    fn matching_models_give_zero() {
        let u = UnigramTable::parse("a 0.5\nb 0.3\nc 0.2\n").unwrap();
        assert!(slor(&toks("a b c a"), &u, &u).unwrap().abs() < 1e-15);
    }

    #[test]
    fn single_token_squared_probability() {
        let u = UnigramTable::parse("a 0.5\nb 0.3\nc 0.2\n").unwrap();
        let s = slor(&toks("b"), &Squared(&u), &u).unwrap();
        assert!((s - 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bigram_five_token_sentence() {
        let corpus = [toks("the cat sat on the mat"), toks("the dog sat")];
        let lm = BigramLm::train(corpus.iter().map(Vec::as_slice), 1.0).unwrap();
        let uni = UnigramTable::from_counts(corpus.iter().map(Vec::as_slice)).unwrap();
        let sent = toks("the cat sat on the");
        // vocab {the, cat, sat, on, mat, dog}: V = 6; 9 tokens in total
        // contexts: <s>:2, the:3, cat:1, sat:1, on:1, mat:0, dog:1
        let lp = (3.0f64 / 8.0).ln() + (2.0f64 / 9.0).ln() + (2.0f64 / 7.0).ln() + (2.0f64 / 7.0).ln() + (2.0f64 / 7.0).ln();
        let lu = 3.0 * (3.0f64 / 9.0).ln() + (1.0f64 / 9.0).ln() + (2.0f64 / 9.0).ln() + (1.0f64 / 9.0).ln()
            - (3.0f64 / 9.0).ln();
        let want = (lp - lu) / 5.0;
        assert!((slor(&sent, &lm, &uni).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn missing_token_is_a_vocabulary_error() {
        let u = UnigramTable::parse("a 1\n").unwrap();
        assert!(matches!(slor(&toks("a z"), &u, &u), Err(Error::Vocabulary(_))));
        let lm = BigramLm::train([toks("a").as_slice()], 1.0).unwrap();
        assert!(matches!(lm.log_prob(&toks("z")), Err(Error::Vocabulary(_))));
    }

    #[test]
    fn unigram_file_is_normalized() {
        let u = UnigramTable::parse("x 2\ny 6\n").unwrap();
        assert_eq!(u.prob("x").unwrap(), 0.25);
        assert_eq!(u.prob("Y").unwrap(), 0.75);
        let back = UnigramTable::parse(&u.to_text()).unwrap();
        assert_eq!(back, u);
        assert!(UnigramTable::parse("x\n").is_err());
        assert!(UnigramTable::parse("x -1\n").is_err());
        assert!(matches!(UnigramTable::load(Path::new("/nonexistent/u.txt")), Err(Error::Path(_))));
    }

    #[test]
    fn bigram_conditionals_sum_to_one() {
        let corpus = [toks("a b a c"), toks("b b c")];
        let lm = BigramLm::train(corpus.iter().map(Vec::as_slice), 0.5).unwrap();
        for prev in ["<s>", "a", "b", "c"] {
            let s: f64 = ["a", "b", "c"].iter().map(|n| lm.conditional(prev, n).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
