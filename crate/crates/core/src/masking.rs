//! Masked-sentence construction for full-position (FPM) and single-position
//! augmented (SPAM) masking.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cover::{CoverDocument, EmbeddingPlan, EmbeddingSite, MaskingStrategy};
use crate::error::{Error, Result};
use crate::model::tokenizer::WordPieceTokenizer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub sentence_index: usize,
    /// `[CLS] pieces [SEP]` with each site's piece replaced by `[MASK]`.
    pub piece_ids: Vec<u32>,
    /// Offsets into `piece_ids`, parallel to `sites`.
    pub mask_offsets: Vec<usize>,
    pub sites: Vec<EmbeddingSite>,
    /// One label per mask once the coding step has chosen targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
    /// Index of the first sentence piece kept after truncation.
    #[serde(default)]
    pub window_start: usize,
}

impl MaskedSample {
    pub fn masked_positions(&self) -> impl Iterator<Item = (usize, &EmbeddingSite)> {
        self.mask_offsets.iter().copied().zip(&self.sites)
    }

    pub fn mask_count(&self) -> usize {
        self.mask_offsets.len()
    }

    /// Piece ids with every mask restored to its site's original word.
    pub fn unmasked_ids(&self) -> Vec<u32> {
        let mut ids = self.piece_ids.clone();
        for (offset, site) in self.masked_positions() {
            ids[offset] = site.vocab_id;
        }
        ids
    }
}

/// Sentence pieces plus the piece offset of every token.
struct SentencePieces {
    pieces: Vec<u32>,
    token_starts: Vec<usize>,
}

fn sentence_pieces(doc: &CoverDocument, sentence_index: usize, tokenizer: &WordPieceTokenizer) -> SentencePieces {
    let mut pieces = Vec::new();
    let mut token_starts = Vec::new();
    for token in &doc.sentences[sentence_index].tokens {
        token_starts.push(pieces.len());
        pieces.extend(tokenizer.encode_word(&token.surface));
    }
    SentencePieces { pieces, token_starts }
}

/// Model input ids for a whole sentence: `[CLS] pieces [SEP]`, untruncated.
pub fn sentence_ids(doc: &CoverDocument, sentence_index: usize, tokenizer: &WordPieceTokenizer) -> Vec<u32> {
    let sp = sentence_pieces(doc, sentence_index, tokenizer);
    let mut ids = Vec::with_capacity(sp.pieces.len() + 2);
    ids.push(tokenizer.cls_id());
    ids.extend(sp.pieces);
    ids.push(tokenizer.sep_id());
    ids
}

fn check_site(doc: &CoverDocument, site: &EmbeddingSite, tokenizer: &WordPieceTokenizer) -> Result<()> {
    let token = doc
        .sentences
        .get(site.sentence_index)
        .and_then(|s| s.tokens.get(site.token_index))
        .ok_or_else(|| {
            Error::PlanMismatch(format!(
                "site ({}, {}) is outside the document",
                site.sentence_index, site.token_index
            ))
        })?;
    if token.surface != site.original_word {
        return Err(Error::PlanMismatch(format!(
            "site ({}, {}) expects {:?} but the document has {:?}",
            site.sentence_index, site.token_index, site.original_word, token.surface
        )));
    }
    if tokenizer.encode_word(&token.surface) != [site.vocab_id] {
        return Err(Error::PlanMismatch(format!(
            "site word {:?} is not the single piece {}",
            site.original_word, site.vocab_id
        )));
    }
    Ok(())
}

/// Window of `budget` pieces containing every offset in `masks`, placed
/// symmetrically around the leftmost one where the sentence allows.
fn window(len: usize, masks: &[usize], budget: usize) -> Result<usize> {
    if len <= budget {
        return Ok(0);
    }
    let left = *masks.iter().min().expect("sample has a mask");
    let right = *masks.iter().max().expect("sample has a mask");
    if right - left + 1 > budget {
        return Err(Error::SequenceTooLong {
            len: right - left + 3,
            max: budget + 2,
        });
    }
    let mut start = left.saturating_sub((budget - 1) / 2).min(len - budget);
    if right >= start + budget {
        start = right + 1 - budget;
    }
    Ok(start)
}

fn make_sample(
    sentence_index: usize,
    sp: &SentencePieces,
    sites: Vec<EmbeddingSite>,
    tokenizer: &WordPieceTokenizer,
    max_len: usize,
) -> Result<MaskedSample> {
    if max_len < 3 {
        return Err(Error::SequenceTooLong { len: 3, max: max_len });
    }
    let offsets: Vec<usize> = sites.iter().map(|s| sp.token_starts[s.token_index]).collect();
    let budget = max_len - 2;
    let start = window(sp.pieces.len(), &offsets, budget)?;
    let end = (start + budget).min(sp.pieces.len());
    let mut piece_ids = Vec::with_capacity(end - start + 2);
    piece_ids.push(tokenizer.cls_id());
    piece_ids.extend_from_slice(&sp.pieces[start..end]);
    piece_ids.push(tokenizer.sep_id());
    let mask_offsets: Vec<usize> = offsets.iter().map(|o| o - start + 1).collect();
    for &o in &mask_offsets {
        piece_ids[o] = tokenizer.mask_id();
    }
    Ok(MaskedSample {
        sentence_index,
        piece_ids,
        mask_offsets,
        sites,
        labels: None,
        window_start: start,
    })
}

/// One sample per sentence with at least one site; all of the sentence's
/// sites are masked together.
pub fn build_fpm(
    doc: &CoverDocument,
    plan: &EmbeddingPlan,
    tokenizer: &WordPieceTokenizer,
    max_len: usize,
) -> Result<Vec<MaskedSample>> {
    let mut out = Vec::new();
    for (sentence_index, sites) in plan.sites_by_sentence() {
        for site in &sites {
            check_site(doc, site, tokenizer)?;
        }
        let sp = sentence_pieces(doc, sentence_index, tokenizer);
        let sites = sites.into_iter().cloned().collect();
        out.push(make_sample(sentence_index, &sp, sites, tokenizer, max_len)?);
    }
    Ok(out)
}

/// One sample per site, each masking only that site.
pub fn build_spam(
    doc: &CoverDocument,
    plan: &EmbeddingPlan,
    tokenizer: &WordPieceTokenizer,
    max_len: usize,
) -> Result<Vec<MaskedSample>> {
    let mut out = Vec::with_capacity(plan.sites.len());
    for (sentence_index, sites) in plan.sites_by_sentence() {
        for site in &sites {
            check_site(doc, site, tokenizer)?;
        }
        let sp = sentence_pieces(doc, sentence_index, tokenizer);
        for site in sites {
            out.push(make_sample(
                sentence_index,
                &sp,
                vec![site.clone()],
                tokenizer,
                max_len,
            )?);
        }
    }
    Ok(out)
}

pub fn build(
    strategy: MaskingStrategy,
    doc: &CoverDocument,
    plan: &EmbeddingPlan,
    tokenizer: &WordPieceTokenizer,
    max_len: usize,
) -> Result<Vec<MaskedSample>> {
    match strategy {
        MaskingStrategy::FullPosition => build_fpm(doc, plan, tokenizer, max_len),
        MaskingStrategy::SinglePosition => build_spam(doc, plan, tokenizer, max_len),
    }
}

pub fn write_jsonl(samples: &[MaskedSample], mut out: impl Write) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(|e| Error::io("<masked dataset>", e))?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<MaskedSample>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<masked dataset>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn save_jsonl(samples: &[MaskedSample], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_jsonl(samples, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
