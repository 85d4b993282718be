//! Masked language model backend: tokenizer, weights, prediction and the
//! on-disk model directory.

pub mod config;
pub mod optim;
pub mod pretrain;
pub mod safetensors;
pub mod tokenizer;
pub mod transformer;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ndarray::{Array2, ArrayD};
use serde::{Deserialize, Serialize};

use crate::coding::PredictionDistribution;
use crate::cover::DEFAULT_MODEL_ID;
use crate::error::{Error, Result};
use crate::masking::MaskedSample;
use crate::util;

pub use config::MlmConfig;
pub use tokenizer::WordPieceTokenizer;
pub use transformer::MlmWeights;

pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const WEIGHTS_FILE: &str = "model.safetensors";
/// Environment variable naming the model cache directory.
pub const MODEL_DIR_ENV: &str = "CLSTEGA_MODEL_DIR";
const DEFAULT_MODEL_DIR: &str = "models";

/// Weights plus the tokenizer they were trained with.
#[derive(Debug, Clone)]
pub struct MaskedLm {
    pub config: MlmConfig,
    pub weights: MlmWeights,
    pub tokenizer: WordPieceTokenizer,
}

impl MaskedLm {
    pub fn init(config: MlmConfig, tokenizer: WordPieceTokenizer, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.vocab_size != tokenizer.vocab_size() {
            return Err(Error::InvalidConfig(format!(
                "config vocab size {} differs from tokenizer size {}",
                config.vocab_size,
                tokenizer.vocab_size()
            )));
        }
        let weights = MlmWeights::init(&config, seed);
        Ok(Self {
            config,
            weights,
            tokenizer,
        })
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let config: MlmConfig = util::read_json(&dir.join(CONFIG_FILE))?;
        config.validate()?;
        let tokenizer = WordPieceTokenizer::load(&dir.join(VOCAB_FILE))?;
        if config.vocab_size != tokenizer.vocab_size() {
            return Err(Error::ArtifactCorrupt(format!(
                "{}: vocab size {} in config but {} in vocab file",
                dir.display(),
                config.vocab_size,
                tokenizer.vocab_size()
            )));
        }
        let mut loaded = safetensors::load(&dir.join(WEIGHTS_FILE))?;
        let mut weights = MlmWeights::init(&config, 0);
        for (name, mut slot) in weights.tensors_mut() {
            let t: ArrayD<f64> = loaded
                .tensors
                .remove(&name)
                .ok_or_else(|| Error::ArtifactCorrupt(format!("missing tensor {name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::ArtifactCorrupt(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            slot.assign(&t);
        }
        if let Some(extra) = loaded.tensors.keys().next() {
            return Err(Error::ArtifactCorrupt(format!("unexpected tensor {extra}")));
        }
        Ok(Self {
            config,
            weights,
            tokenizer,
        })
    }

    /// Writes config, vocabulary and weights; returns the weights file digest.
    pub fn save_dir(&self, dir: &Path) -> Result<String> {
        util::create_dir_all(dir)?;
        util::write_json(&dir.join(CONFIG_FILE), &self.config)?;
        self.tokenizer.save(&dir.join(VOCAB_FILE))?;
        let mut meta = BTreeMap::new();
        meta.insert("format".to_string(), "pt".to_string());
        let bytes = safetensors::serialize(&self.weights.tensors(), &meta)?;
        util::write_bytes(&dir.join(WEIGHTS_FILE), &bytes)?;
        Ok(util::sha256_hex(&bytes))
    }

    /// Ids that never receive probability mass.
    pub fn excluded_ids(&self) -> &[u32] {
        self.tokenizer.special_ids()
    }

    /// Logits at `positions` of `ids`.
    pub fn logits(&self, ids: &[u32], positions: &[usize]) -> Array2<f64> {
        self.weights
            .forward(&self.config, ids, positions, self.excluded_ids())
            .logits
    }

    /// Summed cross-entropy of `labels` at `positions`, with the gradient
    /// scaled by `scale` accumulated into `grad`.
    pub fn accumulate_gradient(
        &self,
        ids: &[u32],
        positions: &[usize],
        labels: &[u32],
        scale: f64,
        grad: &mut MlmWeights,
    ) -> f64 {
        let pass = self.weights.forward(&self.config, ids, positions, self.excluded_ids());
        let (loss, d_logits) = transformer::cross_entropy(&pass.logits, labels, scale);
        self.weights.backward(&pass, &d_logits, grad);
        loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Inference,
    Training,
}

/// A loaded model together with the identifiers it was resolved from.
#[derive(Debug, Clone)]
pub struct ModelHandle {
    pub model_id: String,
    pub tokenizer_id: String,
    pub vocab_size: usize,
    pub max_sequence_length: usize,
    pub mode: Mode,
    lm: MaskedLm,
}

impl ModelHandle {
    pub fn new(model_id: impl Into<String>, lm: MaskedLm) -> Self {
        let model_id = model_id.into();
        Self {
            tokenizer_id: model_id.clone(),
            model_id,
            vocab_size: lm.config.vocab_size,
            max_sequence_length: lm.config.max_position_embeddings,
            mode: Mode::Inference,
            lm,
        }
    }

    /// Resolves `model_id` to a model directory and loads it. The bundled
    /// default model is pretrained and cached on first use.
    pub fn load(model_id: &str) -> Result<Self> {
        let dir = resolve_model_dir(model_id)?;
        let lm = MaskedLm::load_dir(&dir)?;
        Ok(Self::new(model_id, lm))
    }

    pub fn lm(&self) -> &MaskedLm {
        &self.lm
    }

    pub fn tokenizer(&self) -> &WordPieceTokenizer {
        &self.lm.tokenizer
    }

    pub fn into_lm(self) -> MaskedLm {
        self.lm
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Mutable weights; only available in training mode.
    pub fn lm_mut(&mut self) -> Result<&mut MaskedLm> {
        match self.mode {
            Mode::Training => Ok(&mut self.lm),
            Mode::Inference => Err(Error::BackendFailure("model is in inference mode".into())),
        }
    }

    /// One distribution per mask of `sample`, all from a single forward pass.
    pub fn predict(&self, sample: &MaskedSample) -> Result<Vec<PredictionDistribution>> {
        if sample.piece_ids.len() > self.max_sequence_length {
            return Err(Error::SequenceTooLong {
                len: sample.piece_ids.len(),
                max: self.max_sequence_length,
            });
        }
        if let Some(&bad) = sample.piece_ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::UnknownVocabId(bad));
        }
        if sample.mask_offsets.iter().any(|&o| o >= sample.piece_ids.len()) {
            return Err(Error::BackendFailure("mask offset outside the sequence".into()));
        }
        let logits = self.lm.logits(&sample.piece_ids, &sample.mask_offsets);
        let probs = transformer::softmax(&logits);
        let excluded = self.lm.excluded_ids();
        probs
            .rows()
            .into_iter()
            .zip(&sample.sites)
            .map(|(row, site)| {
                let row = row.as_slice().expect("softmax rows are contiguous");
                PredictionDistribution::from_dense(row, excluded, site.clone())
            })
            .collect()
    }

    pub fn batch_predict(&self, samples: &[MaskedSample]) -> Result<Vec<Vec<PredictionDistribution>>> {
        samples.iter().map(|s| self.predict(s)).collect()
    }
}

/// Directory that holds (or will hold) the model named `model_id`.
///
/// An id naming an existing directory is used as-is; otherwise the id is
/// looked up under `$CLSTEGA_MODEL_DIR` (default `./models`).
pub fn model_dir(model_id: &str) -> PathBuf {
    let direct = Path::new(model_id);
    if direct.join(CONFIG_FILE).is_file() {
        return direct.to_path_buf();
    }
    let root = std::env::var_os(MODEL_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_MODEL_DIR));
    root.join(model_id)
}

pub fn resolve_model_dir(model_id: &str) -> Result<PathBuf> {
    let dir = model_dir(model_id);
    if dir.join(CONFIG_FILE).is_file() {
        return Ok(dir);
    }
    if model_id == DEFAULT_MODEL_ID {
        static PRETRAIN_LOCK: Mutex<()> = Mutex::new(());
        let _guard = PRETRAIN_LOCK.lock().unwrap_or_else(|e| e.into_inner());
        if dir.join(CONFIG_FILE).is_file() {
            return Ok(dir);
        }
        log::info!("pretraining {model_id} into {}", dir.display());
        let (lm, report) = pretrain::pretrain(&pretrain::PretrainConfig::default())?;
        log::info!("pretraining finished: final loss {:.4}", report.final_loss);
        // Build beside the target and rename so concurrent processes never
        // observe a half-written directory.
        let staging = dir.with_extension(format!("staging-{}", std::process::id()));
        lm.save_dir(&staging)?;
        if std::fs::rename(&staging, &dir).is_err() {
            let _ = std::fs::remove_dir_all(&staging);
            if !dir.join(CONFIG_FILE).is_file() {
                return Err(Error::BackendFailure(format!("could not install {}", dir.display())));
            }
        }
        return Ok(dir);
    }
    Err(Error::BackendFailure(format!(
        "model {model_id:?} not found at {}",
        dir.display()
    )))
}
