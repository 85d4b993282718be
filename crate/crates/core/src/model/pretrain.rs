//! Masked-LM pretraining of the bundled default model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::MlmConfig;
use super::optim::AdamW;
use super::tokenizer::WordPieceTokenizer;
use super::MaskedLm;
use crate::corpus;
use crate::cover::segment::sentence_spans;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub mask_prob: f64,
    pub min_freq: usize,
    pub max_vocab: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            batch_size: 16,
            mask_prob: 0.15,
            min_freq: 2,
            max_vocab: 4000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub sentences: usize,
    pub loss_by_epoch: Vec<f64>,
    pub final_loss: f64,
}

/// Sentences of the bundled corpora.
pub fn default_sentences() -> Vec<String> {
    let mut out = Vec::new();
    for text in [corpus::DESK_CORPUS, corpus::PRETRAIN_CORPUS] {
        for line in corpus::lines(text) {
            out.extend(sentence_spans(line).into_iter().map(|(s, e)| line[s..e].to_string()));
        }
    }
    out
}

/// Trains a tokenizer and a tiny masked LM on the bundled corpora.
pub fn pretrain(cfg: &PretrainConfig) -> Result<(MaskedLm, PretrainReport)> {
    pretrain_on(&default_sentences(), cfg)
}

/// Replaces a random 15%-style subset of positions: 80% become `[MASK]`,
/// 10% a random ordinary token, 10% stay. Returns positions and labels.
fn mask_sentence(
    ids: &mut [u32],
    tokenizer: &WordPieceTokenizer,
    mask_prob: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<u32>) {
    let mut candidates: Vec<usize> = (1..ids.len() - 1).collect();
    candidates.shuffle(rng);
    let n = ((candidates.len() as f64 * mask_prob).round() as usize).max(1);
    let mut positions: Vec<usize> = candidates.into_iter().take(n).collect();
    positions.sort_unstable();
    let labels = positions.iter().map(|&p| ids[p]).collect();
    let first_ordinary = tokenizer.special_ids().len() as u32;
    for &p in &positions {
        let roll: f64 = rng.random();
        if roll < 0.8 {
            ids[p] = tokenizer.mask_id();
        } else if roll < 0.9 {
            ids[p] = rng.random_range(first_ordinary..tokenizer.vocab_size() as u32);
        }
    }
    (positions, labels)
}

pub fn pretrain_on(sentences: &[String], cfg: &PretrainConfig) -> Result<(MaskedLm, PretrainReport)> {
    if sentences.is_empty() {
        return Err(Error::InsufficientData("no pretraining sentences".into()));
    }
    let tokenizer = WordPieceTokenizer::train(sentences.iter().map(String::as_str), cfg.min_freq, cfg.max_vocab)?;
    let config = MlmConfig::tiny(tokenizer.vocab_size());
    let max_len = config.max_position_embeddings;
    let encoded: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| {
            let mut ids = vec![tokenizer.cls_id()];
            ids.extend(tokenizer.encode(s).into_iter().take(max_len - 2));
            ids.push(tokenizer.sep_id());
            ids
        })
        .filter(|ids| ids.len() > 2)
        .collect();
    let mut lm = MaskedLm::init(config, tokenizer, cfg.seed)?;
    let mut opt = AdamW::new(&lm.weights, cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut loss_by_epoch = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_masks = 0usize;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let prepared: Vec<_> = batch
                .iter()
                .map(|&i| {
                    let mut ids = encoded[i].clone();
                    let (pos, labels) = mask_sentence(&mut ids, &lm.tokenizer, cfg.mask_prob, &mut rng);
                    (ids, pos, labels)
                })
                .collect();
            let masks: usize = prepared.iter().map(|p| p.1.len()).sum();
            let scale = 1.0 / masks as f64;
            let mut grad = lm.weights.zeros_like();
            for (ids, pos, labels) in &prepared {
                epoch_loss += lm.accumulate_gradient(ids, pos, labels, scale, &mut grad);
            }
            epoch_masks += masks;
            opt.step(&mut lm.weights, &grad);
        }
        let mean = epoch_loss / epoch_masks as f64;
        log::debug!("pretrain epoch {epoch}: loss {mean:.4}");
        loss_by_epoch.push(mean);
    }
    let final_loss = loss_by_epoch.last().copied().unwrap_or(f64::NAN);
    Ok((
        lm,
        PretrainReport {
            sentences: encoded.len(),
            loss_by_epoch,
            final_loss,
        },
    ))
}
