//! Experiment grid: embed and extract under several keys and report metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coding::BitMessage;
use crate::cover::{self, CoverDocument, EmbeddingPlan, LocatingStrategy, MaskingStrategy, SiteCount, StegoKey};
use crate::error::{Error, Result};
use crate::extractor;
use crate::metrics::{self, BigramScorer, EvalReport, SentenceScorer};
use crate::model::ModelHandle;
use crate::trainer::{self, TrainingReport};
use crate::util;

/// Message length per cell: fill the plan, or a fixed bit count capped at
/// the plan's capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageSize {
    Bits(usize),
    Named(Capacity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capacity {
    Capacity,
}

impl Default for MessageSize {
    fn default() -> Self {
        MessageSize::Named(Capacity::Capacity)
    }
}

impl MessageSize {
    pub fn bits(self, capacity: usize) -> usize {
        match self {
            MessageSize::Bits(n) => n.min(capacity),
            MessageSize::Named(Capacity::Capacity) => capacity,
        }
    }
}

fn default_sentences() -> usize {
    50
}
fn default_strategies() -> Vec<LocatingStrategy> {
    vec![LocatingStrategy::NonFunctional]
}
fn default_k() -> Vec<SiteCount> {
    vec![SiteCount::Count(1), SiteCount::Count(2)]
}
fn default_masking() -> Vec<MaskingStrategy> {
    vec![MaskingStrategy::SinglePosition]
}
fn default_min_words() -> usize {
    10
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cover text file; the bundled desk corpus when absent.
    #[serde(default)]
    pub cover: Option<PathBuf>,
    /// Number of bundled desk sentences used when `cover` is absent.
    #[serde(default = "default_sentences")]
    pub sentences: usize,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<LocatingStrategy>,
    #[serde(default = "default_k")]
    pub k: Vec<SiteCount>,
    #[serde(default = "default_masking")]
    pub masking: Vec<MaskingStrategy>,
    #[serde(default)]
    pub message_bits: MessageSize,
    #[serde(default = "default_min_words")]
    pub min_sentence_words: usize,
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub detection: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: LocatingStrategy,
    pub k: SiteCount,
    pub masking: MaskingStrategy,
}

impl Cell {
    pub fn name(&self) -> String {
        format!("{}-k{}-{}", self.strategy, self.k, self.masking)
    }
}

impl GridConfig {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &k in &self.k {
                for &masking in &self.masking {
                    out.push(Cell { strategy, k, masking });
                }
            }
        }
        out
    }

    pub fn key_for(&self, cell: &Cell) -> StegoKey {
        let mut key = StegoKey {
            locating_strategy: cell.strategy,
            k: cell.k,
            masking_strategy: cell.masking,
            min_sentence_words: self.min_sentence_words,
            ..StegoKey::default()
        };
        if let Some(id) = &self.model_id {
            key.model_id = id.clone();
            key.tokenizer_id = id.clone();
            key.finetune = cover::FinetuneRecipe::for_model(id);
        }
        key.finetune.seed = self.seed;
        if let Some(e) = self.max_epochs {
            key.finetune.max_epochs = e;
        }
        key
    }

    pub fn cover_text(&self) -> Result<String> {
        match &self.cover {
            Some(path) => util::read_to_string(path),
            None => Ok(crate::corpus::desk_cover(self.sentences)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub name: String,
    pub capacity_bits: usize,
    pub message_bits: usize,
    pub extracted_exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esr_monotone_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `(B_i, L_i)` for every sentence long enough to be planned: message bits
/// carried and word count.
pub fn er_rows(
    doc: &CoverDocument,
    plan: &EmbeddingPlan,
    declared_length: usize,
    min_words: usize,
) -> Vec<(usize, usize)> {
    doc.sentences
        .iter()
        .filter(|s| s.word_count() >= min_words)
        .map(|s| {
            let bits = plan.sites[..declared_length.min(plan.sites.len())]
                .iter()
                .filter(|site| site.sentence_index == s.index)
                .count();
            (bits, s.word_count())
        })
        .collect()
}

/// `(E_i, B_i)` per message-bearing sentence.
pub fn esr_rows(plan: &EmbeddingPlan, sent: &BitMessage, received: &BitMessage) -> Vec<(usize, usize)> {
    let mut rows: Vec<(usize, (usize, usize))> = Vec::new();
    for (i, site) in plan.sites.iter().take(sent.len()).enumerate() {
        if rows.last().map(|r| r.0) != Some(site.sentence_index) {
            rows.push((site.sentence_index, (0, 0)));
        }
        let row = &mut rows.last_mut().expect("pushed above").1;
        row.0 += usize::from(received.bits.get(i) == Some(&sent.bits[i]));
        row.1 += 1;
    }
    rows.into_iter().map(|r| r.1).collect()
}

/// Share of adjacent epoch pairs whose ESR does not decrease.
pub fn monotone_fraction(curve: &[f64]) -> Option<f64> {
    if curve.len() < 2 {
        return None;
    }
    let ok = curve.windows(2).filter(|w| w[1] >= w[0]).count();
    Some(ok as f64 / (curve.len() - 1) as f64)
}

pub fn random_message(bits: usize, seed: u64) -> BitMessage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BitMessage::new((0..bits).map(|_| rng.random_range(0..2u8)).collect()).expect("bits are 0 or 1")
}

/// Embeds a random message under one cell's key, extracts it back and
/// measures every metric.
pub fn run_cell(
    base: &ModelHandle,
    cover_text: &str,
    cfg: &GridConfig,
    cell: &Cell,
    scorer: &dyn SentenceScorer,
    out_dir: &Path,
) -> Result<CellResult> {
    let key = cfg.key_for(cell);
    let doc = cover::segment(cover_text, base.tokenizer())?;
    let plan = cover::locate(&doc, &key, base.tokenizer())?;
    let message = random_message(cfg.message_bits.bits(plan.capacity_bits), cfg.seed);
    let artifact_dir = out_dir.join("artifact");
    let outcome = trainer::embed_with(base, cover_text, &message, &key, &artifact_dir)?;
    let (received, et) = extractor::timed_extract(&[(outcome.stego_text.as_str(), &outcome.artifact)], &key)?;
    let received = received.into_iter().next().expect("one text in, one message out");

    let esr_rows = esr_rows(&plan, &message, &received);
    let esr = if esr_rows.is_empty() {
        1.0
    } else {
        metrics::esr(&esr_rows)?
    };
    let er = metrics::er(&er_rows(&doc, &plan, message.len(), key.min_sentence_words))?;
    let stego_doc = cover::segment(&outcome.stego_text, base.tokenizer())?;
    let cover_sentences: Vec<&str> = (0..doc.sentences.len()).map(|i| doc.sentence_text(i)).collect();
    let stego_sentences: Vec<&str> = (0..stego_doc.sentences.len())
        .map(|i| stego_doc.sentence_text(i))
        .collect();
    let ppl = metrics::ppl(&stego_sentences, scorer)?;
    let kl = metrics::kl_divergence_maps(
        &metrics::word_distribution(&cover_sentences),
        &metrics::word_distribution(&stego_sentences),
    )?;
    let detection = if cfg.detection && cover_sentences.len() >= metrics::detection::MIN_SAMPLES_PER_CLASS {
        Some(metrics::detection_harness(
            &cover_sentences,
            &stego_sentences,
            cfg.seed,
        )?)
    } else {
        None
    };
    Ok(CellResult {
        cell: *cell,
        name: cell.name(),
        capacity_bits: plan.capacity_bits,
        message_bits: message.len(),
        extracted_exact: received == message,
        esr_monotone_fraction: monotone_fraction(&outcome.report.esr_by_epoch),
        report: Some(EvalReport {
            esr,
            er,
            et,
            ppl,
            ppl_scorer: scorer.id(),
            kl_cover_stego: kl,
            detection,
        }),
        training: Some(outcome.report),
        error: None,
    })
}

/// Runs every cell, writing `<out>/<cell>/report.json`, `summary.json` and
/// `summary.tsv`. A failing cell is recorded and the sweep continues.
pub fn run_grid(cfg: &GridConfig, out_dir: &Path) -> Result<Vec<CellResult>> {
    let cells = cfg.cells();
    if cells.is_empty() {
        return Err(Error::InvalidConfig("grid has no cells".into()));
    }
    let cover_text = cfg.cover_text()?;
    let scorer = BigramScorer::bundled();
    let mut base_cache: Option<(String, ModelHandle)> = None;
    let mut results = Vec::with_capacity(cells.len());
    for cell in &cells {
        let key = cfg.key_for(cell);
        let cell_dir = out_dir.join(cell.name());
        util::create_dir_all(&cell_dir)?;
        log::info!("running cell {}", cell.name());
        let base = match &base_cache {
            Some((id, handle)) if *id == key.model_id => Ok(handle.clone()),
            _ => trainer::load_base(&key).inspect(|h| base_cache = Some((key.model_id.clone(), h.clone()))),
        };
        let result = base
            .and_then(|base| run_cell(&base, &cover_text, cfg, cell, &scorer, &cell_dir))
            .unwrap_or_else(|e| CellResult {
                cell: *cell,
                name: cell.name(),
                capacity_bits: 0,
                message_bits: 0,
                extracted_exact: false,
                esr_monotone_fraction: None,
                report: None,
                training: None,
                error: Some(e.to_string()),
            });
        util::write_json(&cell_dir.join("report.json"), &result)?;
        results.push(result);
    }
    util::write_json(&out_dir.join("summary.json"), &results)?;
    util::write_bytes(&out_dir.join("summary.tsv"), summary_table(&results).as_bytes())?;
    Ok(results)
}

pub fn summary_table(results: &[CellResult]) -> String {
    let mut out = String::from("cell\tbits\tepochs\tconverged\tesr\ter\tet\tppl\tkl\tacc\tf1\terror\n");
    for r in results {
        let t = r.training.as_ref();
        let m = r.report.as_ref();
        let d = m.and_then(|m| m.detection);
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.name,
            r.message_bits,
            t.map_or("-".into(), |t| t.epochs_run.to_string()),
            t.map_or("-".into(), |t| t.converged.to_string()),
            f(m.map(|m| m.esr)),
            f(m.map(|m| m.er)),
            m.map_or("-".into(), |m| format!("{:.6}", m.et)),
            f(m.map(|m| m.ppl)),
            f(m.map(|m| m.kl_cover_stego)),
            f(d.map(|d| d.accuracy)),
            f(d.map(|d| d.f1)),
            r.error.as_deref().unwrap_or("-"),
        );
    }
    out
}
