//! Steganalysis harness: a hashed bag-of-ngrams logistic classifier trained
//! to tell cover texts from stego texts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::tokenizer::basic_split;

pub const MIN_SAMPLES_PER_CLASS: usize = 20;
const DIM: usize = 1 << 14;
const TRAIN_FRACTION: f64 = 0.7;
const EPOCHS: usize = 40;
const LEARNING_RATE: f64 = 0.5;
const L2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub accuracy: f64,
    /// F1 with stego as the positive class.
    pub f1: f64,
}

fn fnv1a(parts: &[&str]) -> usize {
    let mut h: u64 = 0xcbf29ce484222325;
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0x1f;
            h = h.wrapping_mul(0x100000001b3);
        }
        for b in p.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    (h % DIM as u64) as usize
}

/// L2-normalized sparse counts of lowercase unigrams and bigrams.
fn features(text: &str) -> Vec<(usize, f64)> {
    let words: Vec<String> = basic_split(text).into_iter().map(str::to_lowercase).collect();
    let mut idx: Vec<usize> = words.iter().map(|w| fnv1a(&[w])).collect();
    idx.extend(words.windows(2).map(|p| fnv1a(&[&p[0], &p[1]])));
    idx.sort_unstable();
    let mut out: Vec<(usize, f64)> = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((j, c)) if *j == i => *c += 1.0,
            _ => out.push((i, 1.0)),
        }
    }
    let norm = out.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, c) in &mut out {
            *c /= norm;
        }
    }
    out
}

struct Logistic {
    w: Vec<f64>,
    b: f64,
}

impl Logistic {
    fn score(&self, x: &[(usize, f64)]) -> f64 {
        let z = self.b + x.iter().map(|&(i, v)| self.w[i] * v).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }

    fn fit(data: &[(Vec<(usize, f64)>, f64)], rng: &mut ChaCha8Rng) -> Self {
        let mut model = Logistic {
            w: vec![0.0; DIM],
            b: 0.0,
        };
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..EPOCHS {
            order.shuffle(rng);
            for &n in &order {
                let (x, y) = &data[n];
                let g = model.score(x) - y;
                for &(i, v) in x {
                    model.w[i] -= LEARNING_RATE * (g * v + L2 * model.w[i]);
                }
                model.b -= LEARNING_RATE * g;
            }
        }
        model
    }
}

/// Trains on a seeded split and reports held-out accuracy and F1.
///
/// Index `i` of both lists lands in the same split, so paired cover and
/// stego texts are never separated.
pub fn detection_harness<S: AsRef<str>>(cover: &[S], stego: &[S], seed: u64) -> Result<Detection> {
    if cover.len() < MIN_SAMPLES_PER_CLASS || stego.len() < MIN_SAMPLES_PER_CLASS {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_SAMPLES_PER_CLASS} texts per class, got {} cover and {} stego",
            cover.len(),
            stego.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cover.len().max(stego.len());
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let cut = ((n as f64) * TRAIN_FRACTION).round() as usize;
    let mut in_train = vec![false; n];
    for &i in &perm[..cut] {
        in_train[i] = true;
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, texts) in [(0.0, cover), (1.0, stego)] {
        for (i, t) in texts.iter().enumerate() {
            let row = (features(t.as_ref()), label);
            if in_train[i] {
                train.push(row);
            } else {
                test.push(row);
            }
        }
    }
    if test.is_empty() || train.is_empty() {
        return Err(Error::InsufficientData("split left an empty partition".into()));
    }
    let model = Logistic::fit(&train, &mut rng);
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (x, y) in &test {
        let pred = model.score(x) >= 0.5;
        match (pred, *y == 1.0) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / test.len() as f64;
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    Ok(Detection { accuracy, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts() -> Vec<String> {
        crate::corpus::lines(crate::corpus::DESK_CORPUS)
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn identical_sets_are_at_chance() {
        let c = texts();
        for seed in 0..3 {
            let d = detection_harness(&c, &c, seed).unwrap();
            assert!((d.accuracy - 0.5).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn marked_texts_are_detected() {
        let c = texts();
        let s: Vec<String> = c.iter().map(|t| format!("{t} zq zq")).collect();
        let d = detection_harness(&c, &s, 1).unwrap();
        assert!(d.accuracy > 0.9, "{d:?}");
        assert!(d.f1 > 0.9);
    }

    #[test]
    fn too_few_samples() {
        let one = vec!["a b c".to_string()];
        assert!(matches!(
            detection_harness(&one, &one, 0),
            Err(Error::InsufficientData(_))
        ));
    }
}
