//! Sentence scorers for perplexity.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::tokenizer::basic_split;
use crate::util;

pub trait SentenceScorer {
    /// Stable identifier recorded in reports.
    fn id(&self) -> String;

    /// Per-token mean log2 probability of `text` (always ≤ 0).
    fn log2_prob(&self, text: &str) -> Result<f64>;
}

const BOS: &str = "<s>";
const EOS: &str = "</s>";

/// Word bigram model with interpolated add-one unigram backoff, trained on a
/// reference corpus.
#[derive(Debug, Clone)]
pub struct BigramScorer {
    unigrams: HashMap<String, f64>,
    bigrams: HashMap<(String, String), f64>,
    total: f64,
    sentences: f64,
    vocab: f64,
    lambda: f64,
    digest: String,
}

impl BigramScorer {
    pub fn train<S: AsRef<str>>(reference: &[S]) -> Result<Self> {
        let mut unigrams: HashMap<String, f64> = HashMap::new();
        let mut bigrams: HashMap<(String, String), f64> = HashMap::new();
        let mut joined = String::new();
        for line in reference {
            let words = sentence_words(line.as_ref());
            joined.push_str(line.as_ref());
            joined.push('\n');
            for w in &words[1..] {
                *unigrams.entry(w.clone()).or_default() += 1.0;
            }
            for pair in words.windows(2) {
                *bigrams.entry((pair[0].clone(), pair[1].clone())).or_default() += 1.0;
            }
        }
        if unigrams.is_empty() {
            return Err(Error::ScorerFailure("empty reference corpus".into()));
        }
        let total = unigrams.values().sum();
        // one extra slot for unseen words
        let vocab = unigrams.len() as f64 + 1.0;
        Ok(Self {
            unigrams,
            bigrams,
            total,
            sentences: reference.len() as f64,
            vocab,
            lambda: 0.7,
            digest: util::sha256_hex(joined.as_bytes())[..12].to_string(),
        })
    }

    /// Scorer over the bundled pretraining corpus.
    pub fn bundled() -> Self {
        let lines = crate::corpus::lines(crate::corpus::PRETRAIN_CORPUS);
        Self::train(&lines).expect("bundled corpus is non-empty")
    }

    fn prob(&self, prev: &str, word: &str) -> f64 {
        let uni = (self.unigrams.get(word).copied().unwrap_or(0.0) + 1.0) / (self.total + self.vocab);
        let context = if prev == BOS {
            Some(self.sentences)
        } else {
            self.unigrams.get(prev).copied()
        };
        match context {
            Some(c) if c > 0.0 => {
                let pair = self
                    .bigrams
                    .get(&(prev.to_string(), word.to_string()))
                    .copied()
                    .unwrap_or(0.0);
                self.lambda * pair / c + (1.0 - self.lambda) * uni
            }
            _ => uni,
        }
    }
}

fn sentence_words(text: &str) -> Vec<String> {
    let mut out = vec![BOS.to_string()];
    out.extend(basic_split(text).into_iter().map(str::to_lowercase));
    out.push(EOS.to_string());
    out
}

impl SentenceScorer for BigramScorer {
    fn id(&self) -> String {
        format!("bigram-interp-{}", self.digest)
    }

    fn log2_prob(&self, text: &str) -> Result<f64> {
        let words = sentence_words(text);
        let mut total = 0.0;
        for pair in words.windows(2) {
            total += self.prob(&pair[0], &pair[1]).log2();
        }
        Ok(total / (words.len() - 1) as f64)
    }
}
