//! Cased WordPiece tokenizer with a BERT-style basic pre-tokenizer.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::util;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];
const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;
const SUFFIXES: [&str; 12] = [
    "s", "es", "ed", "ing", "ly", "er", "est", "ness", "ment", "ful", "less", "tion",
];

#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    special_ids: Vec<u32>,
    digest: String,
}

impl WordPieceTokenizer {
    pub fn from_vocab(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::InvalidConfig(format!("empty vocabulary entry at line {id}")));
            }
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary entry {tok:?}")));
            }
        }
        let mut special_ids = Vec::new();
        for s in SPECIALS {
            match index.get(s) {
                Some(&id) => special_ids.push(id),
                None => return Err(Error::InvalidConfig(format!("vocabulary lacks {s}"))),
            }
        }
        special_ids.sort_unstable();
        let digest = util::sha256_hex(vocab_text(&tokens).as_bytes());
        Ok(Self {
            vocab: tokens,
            index,
            special_ids,
            digest,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = util::read_to_string(path)?;
        Self::from_vocab(text.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, vocab_text(&self.vocab).as_bytes())
    }

    /// Builds a vocabulary from raw texts: special tokens, every observed
    /// character (bare and as a continuation piece), a handful of common
    /// suffix pieces, and whole words seen at least `min_freq` times.
    pub fn train<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize, max_vocab: usize) -> Result<Self> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut chars = BTreeSet::new();
        for text in texts {
            for word in basic_split(text) {
                chars.extend(word.chars());
                *counts.entry(word.to_owned()).or_default() += 1;
            }
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(chars.iter().map(|c| c.to_string()));
        tokens.extend(chars.iter().map(|c| format!("{CONTINUATION}{c}")));
        for suffix in SUFFIXES {
            let piece = format!("{CONTINUATION}{suffix}");
            if !tokens.contains(&piece) {
                tokens.push(piece);
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_freq && w.chars().count() > 1)
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_vocab.saturating_sub(tokens.len());
        tokens.extend(words.into_iter().take(room).map(|(w, _)| w));
        Self::from_vocab(tokens)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// SHA-256 over the vocabulary file contents.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn special_id(&self, token: &str) -> u32 {
        self.index[token]
    }

    pub fn pad_id(&self) -> u32 {
        self.special_id(PAD)
    }
    pub fn unk_id(&self) -> u32 {
        self.special_id(UNK)
    }
    pub fn cls_id(&self) -> u32 {
        self.special_id(CLS)
    }
    pub fn sep_id(&self) -> u32 {
        self.special_id(SEP)
    }
    pub fn mask_id(&self) -> u32 {
        self.special_id(MASK)
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special_ids.binary_search(&id).is_ok()
    }

    pub fn special_ids(&self) -> &[u32] {
        &self.special_ids
    }

    /// Tokenizes a single surface word (which may still contain punctuation)
    /// into subword piece ids.
    pub fn encode_word(&self, surface: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in basic_split(surface) {
            self.wordpiece(word, &mut out);
        }
        out
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_word(text)
    }

    pub fn is_divisible(&self, surface: &str) -> bool {
        self.encode_word(surface).len() > 1
    }

    fn wordpiece(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.unk_id());
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let lo = chars[start].0;
                let hi = chars.get(end).map_or(word.len(), |c| c.0);
                let sub = &word[lo..hi];
                let id = if start == 0 {
                    self.index.get(sub)
                } else {
                    self.index.get(&format!("{CONTINUATION}{sub}"))
                };
                if let Some(&id) = id {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk_id());
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

fn vocab_text(tokens: &[String]) -> String {
    let mut text = tokens.join("\n");
    text.push('\n');
    text
}

pub fn is_punctuation(c: char) -> bool {
    let cp = c as u32;
    if (33..=47).contains(&cp) || (58..=64).contains(&cp) || (91..=96).contains(&cp) || (123..=126).contains(&cp) {
        return true;
    }
    !c.is_alphanumeric() && !c.is_whitespace() && !c.is_control()
}

/// Whitespace split followed by isolating every punctuation character.
pub fn basic_split(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() || c.is_control() {
            if let Some(s) = start.take() {
                out.push(&text[s..i]);
            }
        } else if is_punctuation(c) {
            if let Some(s) = start.take() {
                out.push(&text[s..i]);
            }
            out.push(&text[i..i + c.len_utf8()]);
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}
