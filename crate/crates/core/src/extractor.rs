//! Message recovery from an unmodified stego text.

use std::time::Instant;

use crate::coding::{decode_bit, BitMessage};
use crate::cover::{self, EmbeddingPlan, StegoKey};
use crate::error::{Error, Result};
use crate::masking::{self, MaskedSample};
use crate::model::ModelHandle;
use crate::trainer::ModelArtifact;

/// A loaded artifact ready to decode texts under one key.
#[derive(Debug, Clone)]
pub struct Extractor {
    key: StegoKey,
    artifact: ModelArtifact,
    model: ModelHandle,
}

/// Bits of one text with the wall time spent on each message-bearing sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedExtraction {
    pub message: BitMessage,
    pub sentence_seconds: Vec<f64>,
}

impl Extractor {
    pub fn new(key: &StegoKey, artifact: &ModelArtifact) -> Result<Self> {
        key.validate()?;
        if key.masking_strategy != artifact.masking_strategy() {
            return Err(Error::InvalidConfig(format!(
                "key masks with {} but the artifact was trained with {}",
                key.masking_strategy,
                artifact.masking_strategy()
            )));
        }
        Ok(Self {
            key: key.clone(),
            artifact: artifact.clone(),
            model: artifact.load_model()?,
        })
    }

    pub fn artifact(&self) -> &ModelArtifact {
        &self.artifact
    }

    /// Segments and locates `stego_text`, checking the plan against the artifact.
    pub fn plan(&self, stego_text: &str) -> Result<(cover::CoverDocument, EmbeddingPlan)> {
        let tok = self.model.tokenizer();
        let doc = cover::segment(stego_text, tok)?;
        let plan = cover::locate(&doc, &self.key, tok)?;
        self.artifact.check_fingerprint(&plan.plan_fingerprint)?;
        Ok((doc, plan))
    }

    pub fn extract(&self, stego_text: &str) -> Result<BitMessage> {
        Ok(self.extract_timed(stego_text)?.message)
    }

    /// Decodes the first `declared_length` sites, grouping work by sentence so
    /// each sentence's cost can be timed. Preparation shared by the whole text
    /// is spread evenly over its sentences.
    pub fn extract_timed(&self, stego_text: &str) -> Result<TimedExtraction> {
        let started = Instant::now();
        let (doc, plan) = self.plan(stego_text)?;
        let wanted = self.artifact.declared_length();
        if wanted > plan.capacity_bits {
            return Err(Error::ArtifactCorrupt(format!(
                "artifact declares {wanted} bits but the plan holds {}",
                plan.capacity_bits
            )));
        }
        let used = EmbeddingPlan {
            sites: plan.sites[..wanted].to_vec(),
            capacity_bits: wanted,
            plan_fingerprint: plan.plan_fingerprint.clone(),
        };
        let prep = started.elapsed().as_secs_f64();
        let mut bits = Vec::with_capacity(wanted);
        let mut sentence_seconds = Vec::new();
        for (sentence_index, sites) in used.sites_by_sentence() {
            let t = Instant::now();
            let samples = self.sentence_samples(&doc, &plan, sentence_index, sites.len())?;
            for dists in self.model.batch_predict(&samples)? {
                for dist in &dists {
                    if bits.len() < wanted && dist.site.sentence_index == sentence_index && sites.contains(&&dist.site)
                    {
                        bits.push(decode_bit(dist, &dist.site)?.decoded_bit);
                    }
                }
            }
            sentence_seconds.push(t.elapsed().as_secs_f64());
        }
        if !sentence_seconds.is_empty() {
            let share = prep / sentence_seconds.len() as f64;
            sentence_seconds.iter_mut().for_each(|s| *s += share);
        }
        Ok(TimedExtraction {
            message: BitMessage::new(bits)?,
            sentence_seconds,
        })
    }

    /// Samples needed to read the first `count` sites of a sentence. FPM masks
    /// every planned site of the sentence, as during training.
    fn sentence_samples(
        &self,
        doc: &cover::CoverDocument,
        plan: &EmbeddingPlan,
        sentence_index: usize,
        count: usize,
    ) -> Result<Vec<MaskedSample>> {
        let mut sites: Vec<_> = plan
            .sites
            .iter()
            .filter(|s| s.sentence_index == sentence_index)
            .cloned()
            .collect();
        if self.key.masking_strategy == crate::cover::MaskingStrategy::SinglePosition {
            sites.truncate(count);
        }
        let sub = EmbeddingPlan {
            capacity_bits: sites.len(),
            sites,
            plan_fingerprint: plan.plan_fingerprint.clone(),
        };
        masking::build(
            self.key.masking_strategy,
            doc,
            &sub,
            self.model.tokenizer(),
            self.model.max_sequence_length,
        )
    }
}

pub fn extract(stego_text: &str, key: &StegoKey, artifact: &ModelArtifact) -> Result<BitMessage> {
    Extractor::new(key, artifact)?.extract(stego_text)
}

/// Extracts every `(text, artifact)` pair and returns the messages with the
/// mean wall time per message-bearing sentence.
pub fn timed_extract(items: &[(&str, &ModelArtifact)], key: &StegoKey) -> Result<(Vec<BitMessage>, f64)> {
    let mut messages = Vec::with_capacity(items.len());
    let mut times = Vec::new();
    for (text, artifact) in items {
        let run = Extractor::new(key, artifact)?.extract_timed(text)?;
        messages.push(run.message);
        times.extend(run.sentence_seconds);
    }
    let et = if times.is_empty() {
        0.0
    } else {
        crate::metrics::et(&times)?
    };
    Ok((messages, et))
}
