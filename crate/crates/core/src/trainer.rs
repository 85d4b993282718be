//! Labeled dataset construction, fine-tuning and the model artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coding::{assign_bits, decode_bit, target_word, BitMessage};
use crate::cover::{self, CoverDocument, EmbeddingPlan, EmbeddingSite, FinetuneRecipe, MaskingStrategy, StegoKey};
use crate::error::{Error, Result};
use crate::masking::{self, MaskedSample};
use crate::metrics;
use crate::model::optim::AdamW;
use crate::model::{self, MaskedLm, Mode, ModelHandle};
use crate::util;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Per-site supervision, in plan order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteTarget {
    pub site: EmbeddingSite,
    /// Message bit, or `None` for a site past the end of the message.
    pub bit: Option<u8>,
    /// Bit the base model decodes before any training.
    pub baseline_bit: u8,
    pub label: u32,
}

impl SiteTarget {
    /// Bit this site must decode to after training.
    pub fn required_bit(&self) -> u8 {
        self.bit.unwrap_or(self.baseline_bit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub plan_fingerprint: String,
    pub message_digest: String,
    pub cover_sha256: String,
    pub declared_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub samples: Vec<MaskedSample>,
    pub strategy: MaskingStrategy,
    pub targets: Vec<SiteTarget>,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn mask_count(&self) -> usize {
        self.samples.iter().map(MaskedSample::mask_count).sum()
    }
}

/// Labels every plan site against the base model's distributions: message
/// sites steer toward their bit, trailing sites toward the bit they already
/// decode to.
pub fn build_labeled_dataset(
    doc: &CoverDocument,
    plan: &EmbeddingPlan,
    message: &BitMessage,
    key: &StegoKey,
    base: &ModelHandle,
) -> Result<LabeledDataset> {
    let assigned = assign_bits(plan, message)?;
    let mut samples = masking::build(
        key.masking_strategy,
        doc,
        plan,
        base.tokenizer(),
        base.max_sequence_length,
    )?;
    let mut targets = Vec::with_capacity(plan.sites.len());
    let predicted = base.batch_predict(&samples)?;
    for (sample, dists) in samples.iter_mut().zip(predicted) {
        let mut labels = Vec::with_capacity(dists.len());
        for (site, dist) in sample.sites.iter().zip(&dists) {
            let baseline_bit = decode_bit(dist, site)?.decoded_bit;
            let position = targets.len();
            let bit = assigned.get(position).map(|(s, b)| {
                debug_assert_eq!(s, site);
                *b
            });
            let label = target_word(dist, site, bit.unwrap_or(baseline_bit))?;
            labels.push(label);
            targets.push(SiteTarget {
                site: site.clone(),
                bit,
                baseline_bit,
                label,
            });
        }
        sample.labels = Some(labels);
    }
    Ok(LabeledDataset {
        samples,
        strategy: key.masking_strategy,
        targets,
        provenance: Provenance {
            plan_fingerprint: plan.plan_fingerprint.clone(),
            message_digest: util::sha256_hex(message.to_bit_string().as_bytes()),
            cover_sha256: util::sha256_hex(doc.raw_text.as_bytes()),
            declared_length: message.len(),
        },
    })
}

/// Decoded bits of every site under the dataset's masking.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub decoded: Vec<u8>,
    /// ESR over message-bearing sentences; 1.0 for an empty message.
    pub esr: f64,
    pub message_exact: bool,
    pub trailing_stable: bool,
}

impl Verification {
    pub fn satisfied(&self) -> bool {
        self.message_exact && self.trailing_stable
    }
}

pub fn verify(handle: &ModelHandle, dataset: &LabeledDataset) -> Result<Verification> {
    let mut decoded = Vec::with_capacity(dataset.targets.len());
    for (sample, dists) in dataset.samples.iter().zip(handle.batch_predict(&dataset.samples)?) {
        for (site, dist) in sample.sites.iter().zip(&dists) {
            decoded.push(decode_bit(dist, site)?.decoded_bit);
        }
    }
    let mut per_sentence: Vec<(usize, (usize, usize))> = Vec::new();
    let mut message_exact = true;
    let mut trailing_stable = true;
    for (t, &d) in dataset.targets.iter().zip(&decoded) {
        match t.bit {
            Some(b) => {
                message_exact &= b == d;
                let row = match per_sentence.last_mut() {
                    Some((s, row)) if *s == t.site.sentence_index => row,
                    _ => {
                        per_sentence.push((t.site.sentence_index, (0, 0)));
                        &mut per_sentence.last_mut().expect("just pushed").1
                    }
                };
                row.0 += usize::from(b == d);
                row.1 += 1;
            }
            None => trailing_stable &= t.baseline_bit == d,
        }
    }
    let rows: Vec<(usize, usize)> = per_sentence.into_iter().map(|r| r.1).collect();
    let esr = if rows.is_empty() { 1.0 } else { metrics::esr(&rows)? };
    Ok(Verification {
        decoded,
        esr,
        message_exact,
        trailing_stable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs_run: usize,
    pub esr_by_epoch: Vec<f64>,
    pub loss_by_epoch: Vec<f64>,
    pub initial_esr: f64,
    pub converged: bool,
    /// Mean per-mask cross-entropy of the last epoch (NaN when no epoch ran).
    pub final_loss: f64,
    pub trailing_stable: bool,
    pub capacity_bits: usize,
    pub declared_length: usize,
    pub seconds: f64,
}

/// Fine-tunes a copy of `base` on `dataset` until every site decodes to its
/// required bit or `recipe.max_epochs` is reached.
pub fn train(
    base: &ModelHandle,
    dataset: &LabeledDataset,
    recipe: &FinetuneRecipe,
) -> Result<(ModelHandle, TrainingReport)> {
    if dataset.samples.is_empty() {
        return Err(Error::EmptyInput("labeled dataset has no samples".into()));
    }
    let started = Instant::now();
    let mut handle = base.clone();
    handle.set_mode(Mode::Inference);
    let initial = verify(&handle, dataset)?;
    let mut status = initial.clone();
    let mut esr_by_epoch = Vec::new();
    let mut loss_by_epoch = Vec::new();
    let mut opt = AdamW::new(&handle.lm().weights, recipe.learning_rate, recipe.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut order: Vec<usize> = (0..dataset.samples.len()).collect();
    let mut epoch = 0;
    while !status.satisfied() && epoch < recipe.max_epochs {
        epoch += 1;
        handle.set_mode(Mode::Training);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let lm: &mut MaskedLm = handle.lm_mut()?;
        for batch in order.chunks(recipe.batch_size.max(1)) {
            let masks: usize = batch.iter().map(|&i| dataset.samples[i].mask_count()).sum();
            let scale = 1.0 / masks as f64;
            let mut grad = lm.weights.zeros_like();
            for &i in batch {
                let s = &dataset.samples[i];
                let labels = s
                    .labels
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("dataset sample without labels".into()))?;
                epoch_loss += lm.accumulate_gradient(&s.piece_ids, &s.mask_offsets, labels, scale, &mut grad);
            }
            opt.step(&mut lm.weights, &grad);
        }
        let mean_loss = epoch_loss / dataset.mask_count() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::BackendFailure(format!("loss diverged in epoch {epoch}")));
        }
        handle.set_mode(Mode::Inference);
        status = verify(&handle, dataset)?;
        log::info!("epoch {epoch}: loss {mean_loss:.4} esr {:.4}", status.esr);
        esr_by_epoch.push(status.esr);
        loss_by_epoch.push(mean_loss);
    }
    let report = TrainingReport {
        epochs_run: epoch,
        final_loss: loss_by_epoch.last().copied().unwrap_or(f64::NAN),
        esr_by_epoch,
        loss_by_epoch,
        initial_esr: initial.esr,
        converged: status.satisfied(),
        trailing_stable: status.trailing_stable,
        capacity_bits: dataset.targets.len(),
        declared_length: dataset.provenance.declared_length,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((handle, report))
}

/// Compatibility contract between an artifact and an extraction request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub schema_version: u32,
    pub base_model_id: String,
    pub tokenizer_id: String,
    pub tokenizer_digest: String,
    pub plan_fingerprint: String,
    pub declared_length: usize,
    pub masking_strategy: MaskingStrategy,
    pub key_version: u32,
    pub cover_sha256: String,
    pub weights_file: String,
    pub weights_sha256: String,
    pub converged: bool,
    #[serde(default)]
    pub manifest_digest: String,
}

impl ArtifactManifest {
    fn compute_digest(&self) -> Result<String> {
        let mut body = serde_json::to_value(self)?;
        body.as_object_mut()
            .expect("manifest is an object")
            .remove("manifest_digest");
        Ok(util::sha256_hex(body.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArtifact {
    pub dir: PathBuf,
    pub manifest: ArtifactManifest,
}

impl ModelArtifact {
    pub fn weights_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.weights_file)
    }

    pub fn plan_fingerprint(&self) -> &str {
        &self.manifest.plan_fingerprint
    }

    pub fn declared_length(&self) -> usize {
        self.manifest.declared_length
    }

    pub fn masking_strategy(&self) -> MaskingStrategy {
        self.manifest.masking_strategy
    }

    /// Writes the fine-tuned model and its manifest into `dir`.
    pub fn save(
        dir: &Path,
        handle: &ModelHandle,
        dataset: &LabeledDataset,
        key: &StegoKey,
        converged: bool,
    ) -> Result<Self> {
        let weights_sha256 = handle.lm().save_dir(dir)?;
        let mut manifest = ArtifactManifest {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            base_model_id: handle.model_id.clone(),
            tokenizer_id: handle.tokenizer_id.clone(),
            tokenizer_digest: handle.tokenizer().digest().to_string(),
            plan_fingerprint: dataset.provenance.plan_fingerprint.clone(),
            declared_length: dataset.provenance.declared_length,
            masking_strategy: dataset.strategy,
            key_version: key.version,
            cover_sha256: dataset.provenance.cover_sha256.clone(),
            weights_file: model::WEIGHTS_FILE.to_string(),
            weights_sha256,
            converged,
            manifest_digest: String::new(),
        };
        manifest.manifest_digest = manifest.compute_digest()?;
        util::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Reads and checks the manifest and the weights digest.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let value: serde_json::Value = util::read_json(&path)?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::ArtifactCorrupt("manifest lacks schema_version".into()))?;
        if found != ARTIFACT_SCHEMA_VERSION as u64 {
            return Err(Error::UnsupportedSchema {
                what: "artifact",
                found: found as u32,
                supported: ARTIFACT_SCHEMA_VERSION,
            });
        }
        let manifest: ArtifactManifest =
            serde_json::from_value(value).map_err(|e| Error::ArtifactCorrupt(format!("manifest: {e}")))?;
        if manifest.compute_digest()? != manifest.manifest_digest {
            return Err(Error::ArtifactCorrupt(
                "manifest digest does not match its contents".into(),
            ));
        }
        let artifact = Self {
            dir: dir.to_path_buf(),
            manifest,
        };
        let bytes = util::read_bytes(&artifact.weights_path())?;
        if util::sha256_hex(&bytes) != artifact.manifest.weights_sha256 {
            return Err(Error::ArtifactCorrupt(
                "weights digest does not match the manifest".into(),
            ));
        }
        Ok(artifact)
    }

    /// Loads the artifact, refusing it unless it was built for `plan_fingerprint`.
    pub fn load_for(dir: &Path, plan_fingerprint: &str) -> Result<Self> {
        let artifact = Self::load(dir)?;
        artifact.check_fingerprint(plan_fingerprint)?;
        Ok(artifact)
    }

    pub fn check_fingerprint(&self, plan_fingerprint: &str) -> Result<()> {
        if self.manifest.plan_fingerprint != plan_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.manifest.plan_fingerprint.clone(),
                found: plan_fingerprint.to_string(),
            });
        }
        Ok(())
    }

    /// The fine-tuned model, in inference mode.
    pub fn load_model(&self) -> Result<ModelHandle> {
        let lm = MaskedLm::load_dir(&self.dir)?;
        if lm.tokenizer.digest() != self.manifest.tokenizer_digest {
            return Err(Error::ArtifactCorrupt("vocabulary differs from the manifest".into()));
        }
        let mut handle = ModelHandle::new(self.manifest.base_model_id.clone(), lm);
        handle.tokenizer_id = self.manifest.tokenizer_id.clone();
        Ok(handle)
    }
}

/// Fine-tunes and saves the artifact into `out_dir`. A run that hits the
/// epoch cap still saves its artifact; `report.converged` tells the caller.
pub fn fine_tune(
    base: &ModelHandle,
    dataset: &LabeledDataset,
    key: &StegoKey,
    out_dir: &Path,
) -> Result<(ModelArtifact, TrainingReport)> {
    let (tuned, report) = train(base, dataset, &key.finetune)?;
    let artifact = ModelArtifact::save(out_dir, &tuned, dataset, key, report.converged)?;
    Ok((artifact, report))
}

/// Loads the key's base model and checks it against the key's tokenizer id.
pub fn load_base(key: &StegoKey) -> Result<ModelHandle> {
    key.validate()?;
    let mut handle = ModelHandle::load(&key.model_id)?;
    if key.tokenizer_id != key.model_id {
        return Err(Error::InvalidConfig(format!(
            "tokenizer {:?} does not belong to model {:?}",
            key.tokenizer_id, key.model_id
        )));
    }
    handle.tokenizer_id = key.tokenizer_id.clone();
    Ok(handle)
}

#[derive(Debug)]
pub struct EmbedOutcome {
    /// Always byte-identical to the cover text.
    pub stego_text: String,
    pub artifact: ModelArtifact,
    pub report: TrainingReport,
    pub plan: EmbeddingPlan,
}

/// Hides `message` in `raw_text` without touching it.
pub fn embed(raw_text: &str, message: &BitMessage, key: &StegoKey, out_dir: &Path) -> Result<EmbedOutcome> {
    let base = load_base(key)?;
    embed_with(&base, raw_text, message, key, out_dir)
}

/// [`embed`] against an already loaded base model.
pub fn embed_with(
    base: &ModelHandle,
    raw_text: &str,
    message: &BitMessage,
    key: &StegoKey,
    out_dir: &Path,
) -> Result<EmbedOutcome> {
    key.validate()?;
    let doc = cover::segment(raw_text, base.tokenizer())?;
    let plan = cover::locate(&doc, key, base.tokenizer())?;
    let dataset = build_labeled_dataset(&doc, &plan, message, key, base)?;
    let (artifact, report) = fine_tune(base, &dataset, key, out_dir)?;
    let stego_text = raw_text.to_string();
    debug_assert_eq!(util::sha256_hex(stego_text.as_bytes()), artifact.manifest.cover_sha256);
    Ok(EmbedOutcome {
        stego_text,
        artifact,
        report,
        plan,
    })
}
