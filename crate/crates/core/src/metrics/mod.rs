//! Evaluation metrics: extraction success, embedding rate, extraction time,
//! perplexity, KL divergence and a steganalysis harness.

pub mod detection;
pub mod scorer;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use detection::{detection_harness, Detection};
pub use scorer::{BigramScorer, SentenceScorer};

/// Mean over sentences of extracted-correct bits over embedded bits.
/// Sentences without embedded bits are skipped.
pub fn esr(per_sentence: &[(usize, usize)]) -> Result<f64> {
    let rows: Vec<_> = per_sentence.iter().filter(|r| r.1 > 0).collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput("no sentence carries embedded bits".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.0 > r.1) {
        return Err(Error::InvalidConfig(format!("{} correct bits out of {}", r.0, r.1)));
    }
    Ok(rows.iter().map(|&&(e, b)| e as f64 / b as f64).sum::<f64>() / rows.len() as f64)
}

/// Mean over sentences of embedded bits per word.
pub fn er(per_sentence: &[(usize, usize)]) -> Result<f64> {
    if per_sentence.is_empty() {
        return Err(Error::EmptyInput("no sentences".into()));
    }
    if per_sentence.iter().any(|r| r.1 == 0) {
        return Err(Error::InvalidConfig("sentence with zero words".into()));
    }
    Ok(per_sentence.iter().map(|&(b, l)| b as f64 / l as f64).sum::<f64>() / per_sentence.len() as f64)
}

/// Mean extraction time per sentence.
pub fn et(times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::EmptyInput("no timings".into()));
    }
    Ok(times.iter().sum::<f64>() / times.len() as f64)
}

/// Perplexity `2^(-(1/N) Σ log2 p_i)` over per-sentence scores.
pub fn ppl(texts: &[&str], scorer: &dyn SentenceScorer) -> Result<f64> {
    if texts.is_empty() {
        return Err(Error::EmptyInput("no texts to score".into()));
    }
    let mut total = 0.0;
    for text in texts {
        let lp = scorer.log2_prob(text)?;
        if !lp.is_finite() || lp > 0.0 {
            return Err(Error::ScorerFailure(format!("{} returned log2 p = {lp}", scorer.id())));
        }
        total += lp;
    }
    Ok(2f64.powf(-total / texts.len() as f64))
}

/// `Σ p log2(p / q)` over aligned atoms.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(format!("{} atoms against {}", p.len(), q.len())));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi < 0.0 || qi < 0.0 || !pi.is_finite() || !qi.is_finite() {
            return Err(Error::SupportMismatch(format!("atom {i} has invalid mass")));
        }
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::SupportMismatch(format!("atom {i} has p > 0 but q = 0")));
        }
        total += pi * (pi / qi).log2();
    }
    Ok(total)
}

/// KL divergence between two keyed distributions; keys missing from one side
/// count as zero mass.
pub fn kl_divergence_maps(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> Result<f64> {
    let keys: std::collections::BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    let pv: Vec<f64> = keys.iter().map(|k| p.get(*k).copied().unwrap_or(0.0)).collect();
    let qv: Vec<f64> = keys.iter().map(|k| q.get(*k).copied().unwrap_or(0.0)).collect();
    kl_divergence(&pv, &qv)
}

/// Relative frequency of every whitespace-and-punctuation separated word.
pub fn word_distribution<S: AsRef<str>>(texts: &[S]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for t in texts {
        for w in crate::model::tokenizer::basic_split(t.as_ref()) {
            *counts.entry(w.to_string()).or_default() += 1.0;
            total += 1.0;
        }
    }
    for v in counts.values_mut() {
        *v /= total;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub esr: f64,
    pub er: f64,
    pub et: f64,
    pub ppl: f64,
    pub ppl_scorer: String,
    pub kl_cover_stego: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<Detection>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Fixed(Vec<f64>);
    impl SentenceScorer for Fixed {
        fn id(&self) -> String {
            "fixed".into()
        }
        fn log2_prob(&self, text: &str) -> Result<f64> {
            Ok(self.0[text.parse::<usize>().unwrap()])
        }
    }

    #[test]
    fn esr_examples() {
        assert_eq!(esr(&[(4, 4)]).unwrap(), 1.0);
        assert_eq!(esr(&[(3, 4), (4, 4)]).unwrap(), 0.875);
        assert_eq!(esr(&[(3, 4), (0, 0)]).unwrap(), 0.75);
        assert!(matches!(esr(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(esr(&[(0, 0)]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn er_examples() {
        assert_eq!(er(&[(2, 10)]).unwrap(), 0.2);
        assert_eq!(er(&[(0, 10)]).unwrap(), 0.0);
        assert!(matches!(er(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn et_examples() {
        assert_eq!(et(&[1.0]).unwrap(), 1.0);
        assert_eq!(et(&[1.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(et(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn ppl_single_sentence() {
        let s = Fixed(vec![-10.0, -2.0, -4.0]);
        assert_eq!(ppl(&["0"], &s).unwrap(), 1024.0);
        assert_relative_eq!(ppl(&["1", "2"], &s).unwrap(), 8.0, max_relative = 1e-12);
        assert!(matches!(ppl(&[], &s), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn ppl_identical_sets_match_and_is_monotone() {
        let s = Fixed(vec![-3.0, -5.0, -7.0, -2.5, -4.5, -6.5]);
        assert_eq!(ppl(&["0", "1", "2"], &s).unwrap(), ppl(&["0", "1", "2"], &s).unwrap());
        assert!(ppl(&["3", "4", "5"], &s).unwrap() < ppl(&["0", "1", "2"], &s).unwrap());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.25; 4], &[0.25; 4]).unwrap(), 0.0);
        assert_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 1.0);
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::SupportMismatch(_))
        ));
        assert!(matches!(
            kl_divergence(&[1.0], &[0.5, 0.5]),
            Err(Error::SupportMismatch(_))
        ));
    }

    #[test]
    fn kl_of_identical_word_distributions_is_zero() {
        let texts = ["The cat sat on the mat.", "A dog ran."];
        let p = word_distribution(&texts);
        assert_eq!(kl_divergence_maps(&p, &p.clone()).unwrap(), 0.0);
        let q = word_distribution(&["The cat sat on a mat."]);
        assert!(matches!(kl_divergence_maps(&p, &q), Err(Error::SupportMismatch(_))));
    }
}
