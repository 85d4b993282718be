//! Cover text preparation: segmentation, tagging and embedding-site location.

mod key;
mod locate;
pub mod pos;
pub mod segment;

use serde::{Deserialize, Serialize};

pub use key::{
    FinetuneRecipe, LocatingStrategy, MaskingStrategy, SiteCount, StegoKey, DEFAULT_MODEL_ID, KEY_SCHEMA_VERSION,
    LOCATING_RULES_VERSION,
};
pub use locate::{locate, plan_fingerprint, EmbeddingPlan, EmbeddingSite};
pub use pos::{Upos, TAGGER_VERSION};

use crate::error::{Error, Result};
use crate::model::tokenizer::WordPieceTokenizer;
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos_tag: Upos,
    pub is_functional: bool,
    pub is_divisible: bool,
    pub token_index: usize,
    /// Byte offsets into the owning document's raw text.
    pub char_span: (usize, usize),
}

impl Token {
    pub fn is_word(&self) -> bool {
        self.pos_tag.is_word()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
    pub char_span: (usize, usize),
}

impl Sentence {
    /// Number of words, punctuation and symbols excluded.
    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_word()).count()
    }

    pub fn text<'a>(&self, raw_text: &'a str) -> &'a str {
        &raw_text[self.char_span.0..self.char_span.1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverDocument {
    pub source_id: String,
    pub raw_text: String,
    pub sentences: Vec<Sentence>,
    /// Whitespace before the first sentence, between consecutive sentences,
    /// and after the last one (`sentences.len() + 1` entries).
    pub separators: Vec<String>,
    /// Digest of the tokenizer that judged divisibility.
    pub tokenizer_digest: String,
}

impl CoverDocument {
    pub fn reassemble(&self) -> String {
        let mut out = String::with_capacity(self.raw_text.len());
        out.push_str(&self.separators[0]);
        for (s, sep) in self.sentences.iter().zip(&self.separators[1..]) {
            out.push_str(s.text(&self.raw_text));
            out.push_str(sep);
        }
        out
    }

    pub fn sentence_text(&self, index: usize) -> &str {
        self.sentences[index].text(&self.raw_text)
    }
}

/// Splits `raw_text` into sentences and tagged tokens.
pub fn segment(raw_text: &str, tokenizer: &WordPieceTokenizer) -> Result<CoverDocument> {
    let source_id = util::sha256_hex(raw_text.as_bytes())[..16].to_string();
    segment_with_id(source_id, raw_text, tokenizer)
}

pub fn segment_with_id(
    source_id: impl Into<String>,
    raw_text: &str,
    tokenizer: &WordPieceTokenizer,
) -> Result<CoverDocument> {
    let spans = segment::sentence_spans(raw_text);
    if spans.is_empty() {
        return Err(Error::EmptyInput("text contains no sentences".into()));
    }
    let mut sentences = Vec::with_capacity(spans.len());
    let mut separators = Vec::with_capacity(spans.len() + 1);
    let mut cursor = 0;
    for (index, &(start, end)) in spans.iter().enumerate() {
        separators.push(raw_text[cursor..start].to_string());
        cursor = end;
        let word_spans = segment::word_spans(raw_text, start, end);
        let surfaces: Vec<&str> = word_spans.iter().map(|&(s, e)| &raw_text[s..e]).collect();
        let tags = pos::tag(&surfaces);
        let tokens = word_spans
            .iter()
            .zip(tags)
            .enumerate()
            .map(|(token_index, (&(s, e), pos_tag))| {
                let surface = &raw_text[s..e];
                Token {
                    surface: surface.to_string(),
                    pos_tag,
                    is_functional: pos_tag.is_functional(),
                    is_divisible: tokenizer.is_divisible(surface),
                    token_index,
                    char_span: (s, e),
                }
            })
            .collect();
        sentences.push(Sentence {
            index,
            tokens,
            char_span: (start, end),
        });
    }
    separators.push(raw_text[cursor..].to_string());
    Ok(CoverDocument {
        source_id: source_id.into(),
        raw_text: raw_text.to_string(),
        sentences,
        separators,
        tokenizer_digest: tokenizer.digest().to_string(),
    })
}

/// Keeps only sentences with at least `min_words` words. Surviving sentences
/// of a document are re-joined with single spaces; documents left empty are
/// dropped.
pub fn filter_corpus(documents: &[CoverDocument], min_words: usize) -> Vec<CoverDocument> {
    let min_words = min_words.max(1);
    documents
        .iter()
        .filter_map(|doc| {
            let kept: Vec<&Sentence> = doc.sentences.iter().filter(|s| s.word_count() >= min_words).collect();
            if kept.is_empty() {
                return None;
            }
            let mut raw_text = String::new();
            let mut sentences = Vec::with_capacity(kept.len());
            let mut separators = vec![String::new()];
            for (index, s) in kept.into_iter().enumerate() {
                if index > 0 {
                    raw_text.push(' ');
                    separators.push(" ".to_string());
                }
                let offset = raw_text.len();
                let shift = |(a, b): (usize, usize)| (a - s.char_span.0 + offset, b - s.char_span.0 + offset);
                raw_text.push_str(s.text(&doc.raw_text));
                sentences.push(Sentence {
                    index,
                    char_span: shift(s.char_span),
                    tokens: s
                        .tokens
                        .iter()
                        .map(|t| Token {
                            char_span: shift(t.char_span),
                            ..t.clone()
                        })
                        .collect(),
                });
            }
            separators.push(String::new());
            Some(CoverDocument {
                source_id: doc.source_id.clone(),
                raw_text,
                sentences,
                separators,
                tokenizer_digest: doc.tokenizer_digest.clone(),
            })
        })
        .collect()
}

/// Splits a corpus file into documents: blank-line separated blocks, or one
/// document per line when `per_line` is set.
pub fn split_documents(corpus: &str, per_line: bool) -> Vec<&str> {
    if per_line {
        return corpus.lines().filter(|l| !l.trim().is_empty()).collect();
    }
    let mut docs = Vec::new();
    let mut start: Option<usize> = None;
    let mut offset = 0;
    for line in corpus.split_inclusive('\n') {
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                docs.push(corpus[s..offset].trim_end());
            }
        } else if start.is_none() {
            start = Some(offset);
        }
        offset += line.len();
    }
    if let Some(s) = start {
        docs.push(corpus[s..].trim_end());
    }
    docs
}
