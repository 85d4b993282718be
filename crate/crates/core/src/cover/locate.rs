use std::path::Path;

use serde::{Deserialize, Serialize};

use super::key::StegoKey;
use super::pos::TAGGER_VERSION;
use super::CoverDocument;
use crate::error::{Error, Result};
use crate::model::tokenizer::WordPieceTokenizer;
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingSite {
    pub sentence_index: usize,
    pub token_index: usize,
    pub original_word: String,
    pub vocab_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingPlan {
    pub sites: Vec<EmbeddingSite>,
    pub capacity_bits: usize,
    pub plan_fingerprint: String,
}

impl EmbeddingPlan {
    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        util::read_json(path)
    }

    /// Sites grouped by sentence, in plan order.
    pub fn sites_by_sentence(&self) -> Vec<(usize, Vec<&EmbeddingSite>)> {
        let mut out: Vec<(usize, Vec<&EmbeddingSite>)> = Vec::new();
        for site in &self.sites {
            match out.last_mut() {
                Some((idx, group)) if *idx == site.sentence_index => group.push(site),
                _ => out.push((site.sentence_index, vec![site])),
            }
        }
        out
    }
}

/// Hash binding a plan to its text, key and toolchain. Every key field except
/// the fine-tuning recipe takes part.
pub fn plan_fingerprint(raw_text: &str, key: &StegoKey, tokenizer_digest: &str) -> String {
    let canonical = serde_json::json!({
        "raw_text_sha256": util::sha256_hex(raw_text.as_bytes()),
        "locating_strategy": key.locating_strategy,
        "k": key.k,
        "model_id": key.model_id,
        "tokenizer_id": key.tokenizer_id,
        "tokenizer_digest": tokenizer_digest,
        "tagger_version": TAGGER_VERSION,
        "min_sentence_words": key.min_sentence_words,
        "masking_strategy": key.masking_strategy,
        "key_version": key.version,
    });
    util::sha256_hex(canonical.to_string().as_bytes())
}

/// Chooses up to `k` eligible words per sentence, left to right.
///
/// A word is eligible when its POS class matches the strategy, it is a
/// single known piece under the tokenizer, and its sentence has at least
/// `min_sentence_words` words.
pub fn locate(doc: &CoverDocument, key: &StegoKey, tokenizer: &WordPieceTokenizer) -> Result<EmbeddingPlan> {
    key.validate()?;
    if doc.tokenizer_digest != tokenizer.digest() {
        return Err(Error::PlanMismatch(
            "document was segmented with a different tokenizer".into(),
        ));
    }
    let limit = key.k.limit();
    let mut sites = Vec::new();
    for sentence in &doc.sentences {
        if sentence.word_count() < key.min_sentence_words {
            continue;
        }
        let mut taken = 0;
        for token in &sentence.tokens {
            if taken == limit {
                break;
            }
            if !token.is_word() || token.is_divisible || !key.locating_strategy.admits(token.is_functional) {
                continue;
            }
            let ids = tokenizer.encode_word(&token.surface);
            let [vocab_id] = ids[..] else { continue };
            if tokenizer.is_special(vocab_id) {
                continue;
            }
            sites.push(EmbeddingSite {
                sentence_index: sentence.index,
                token_index: token.token_index,
                original_word: token.surface.clone(),
                vocab_id,
            });
            taken += 1;
        }
    }
    if sites.is_empty() {
        return Err(Error::NoCapacity);
    }
    Ok(EmbeddingPlan {
        capacity_bits: sites.len(),
        plan_fingerprint: plan_fingerprint(&doc.raw_text, key, tokenizer.digest()),
        sites,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{segment, LocatingStrategy, SiteCount};

    fn tok() -> WordPieceTokenizer {
        WordPieceTokenizer::train(
            ["The cat sat on the mat. It was in it and on it. The dog ran."],
            1,
            1000,
        )
        .unwrap()
    }

    fn key(strategy: LocatingStrategy, k: SiteCount) -> StegoKey {
        StegoKey {
            locating_strategy: strategy,
            k,
            min_sentence_words: 1,
            ..StegoKey::default()
        }
    }

    fn words(plan: &EmbeddingPlan) -> Vec<&str> {
        plan.sites.iter().map(|s| s.original_word.as_str()).collect()
    }

    #[test]
    fn nfw_and_fw_on_cat_sentence() {
        let tok = tok();
        let doc = segment("The cat sat on the mat.", &tok).unwrap();
        let plan = locate(&doc, &key(LocatingStrategy::NonFunctional, SiteCount::Count(2)), &tok).unwrap();
        assert_eq!(words(&plan), vec!["cat", "sat"]);
        assert_eq!(plan.capacity_bits, 2);
        let plan = locate(&doc, &key(LocatingStrategy::Functional, SiteCount::Count(2)), &tok).unwrap();
        assert_eq!(words(&plan), vec!["The", "on"]);
        let plan = locate(&doc, &key(LocatingStrategy::AllWords, SiteCount::All), &tok).unwrap();
        assert_eq!(words(&plan), vec!["The", "cat", "sat", "on", "the", "mat"]);
    }

    #[test]
    fn function_word_sentence_contributes_nothing() {
        let tok = tok();
        let doc = segment("It was in it and on it. The dog ran.", &tok).unwrap();
        let plan = locate(&doc, &key(LocatingStrategy::NonFunctional, SiteCount::All), &tok).unwrap();
        assert!(plan.sites.iter().all(|s| s.sentence_index == 1));
        let only = segment("It was in it and on it.", &tok).unwrap();
        assert!(matches!(
            locate(&only, &key(LocatingStrategy::NonFunctional, SiteCount::All), &tok),
            Err(Error::NoCapacity)
        ));
    }

    #[test]
    fn divisible_words_are_skipped() {
        let tok = tok();
        let doc = segment("The cats sat on the mat.", &tok).unwrap();
        assert!(doc.sentences[0].tokens[1].is_divisible);
        let plan = locate(&doc, &key(LocatingStrategy::NonFunctional, SiteCount::Count(2)), &tok).unwrap();
        assert_eq!(words(&plan), vec!["sat", "mat"]);
    }

    #[test]
    fn short_sentences_are_not_planned() {
        let tok = tok();
        let doc = segment("The cat sat on the mat.", &tok).unwrap();
        let mut k = key(LocatingStrategy::NonFunctional, SiteCount::All);
        k.min_sentence_words = 7;
        assert!(matches!(locate(&doc, &k, &tok), Err(Error::NoCapacity)));
        k.min_sentence_words = 6;
        assert!(locate(&doc, &k, &tok).is_ok());
    }

    #[test]
    fn fingerprint_tracks_text_and_key() {
        let tok = tok();
        let k = key(LocatingStrategy::NonFunctional, SiteCount::Count(2));
        let a = locate(&segment("The cat sat on the mat.", &tok).unwrap(), &k, &tok).unwrap();
        let b = locate(&segment("The cat sat on the mat.", &tok).unwrap(), &k, &tok).unwrap();
        assert_eq!(a, b);
        let c = locate(&segment("The cat sat on the mat!", &tok).unwrap(), &k, &tok).unwrap();
        assert_ne!(a.plan_fingerprint, c.plan_fingerprint);
        let k2 = key(LocatingStrategy::NonFunctional, SiteCount::Count(1));
        let d = locate(&segment("The cat sat on the mat.", &tok).unwrap(), &k2, &tok).unwrap();
        assert_ne!(a.plan_fingerprint, d.plan_fingerprint);
        let mut k3 = k.clone();
        k3.finetune.max_epochs = 3;
        let e = locate(&segment("The cat sat on the mat.", &tok).unwrap(), &k3, &tok).unwrap();
        assert_eq!(a.plan_fingerprint, e.plan_fingerprint);
    }

    #[test]
    fn plan_json_fields() {
        let tok = tok();
        let doc = segment("The cat sat on the mat.", &tok).unwrap();
        let plan = locate(&doc, &key(LocatingStrategy::NonFunctional, SiteCount::Count(1)), &tok).unwrap();
        let v = serde_json::to_value(&plan).unwrap();
        let obj = v.as_object().unwrap();
        let mut fields: Vec<&str> = obj.keys().map(String::as_str).collect();
        fields.sort();
        assert_eq!(fields, vec!["capacity_bits", "plan_fingerprint", "sites"]);
        let site = v["sites"][0].as_object().unwrap();
        let mut fields: Vec<&str> = site.keys().map(String::as_str).collect();
        fields.sort();
        assert_eq!(
            fields,
            vec!["original_word", "sentence_index", "token_index", "vocab_id"]
        );
    }
}
