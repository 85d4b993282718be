//! Rank-based steganographic coding.
//!
//! A prediction distribution at a masked site encodes `0` when the original
//! word holds rank 1 and `1` otherwise. Ties are broken by ascending vocab id
//! so both parties agree on a total order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cover::{EmbeddingPlan, EmbeddingSite};
use crate::error::{Error, Result};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    /// `(vocab_id, probability)`, probability descending, ties by ascending id.
    pub entries: Vec<(u32, f64)>,
    pub site: EmbeddingSite,
}

fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

impl PredictionDistribution {
    pub fn new(mut entries: Vec<(u32, f64)>, site: EmbeddingSite) -> Result<Self> {
        if entries.iter().any(|e| !(e.1.is_finite() && e.1 >= 0.0)) {
            return Err(Error::BackendFailure(
                "distribution has negative or non-finite mass".into(),
            ));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::BackendFailure(format!("distribution sums to {total}")));
        }
        entries.sort_by(rank_order);
        Ok(Self { entries, site })
    }

    /// Builds a distribution from a dense probability vector indexed by
    /// vocab id, leaving out `excluded` ids (special tokens).
    pub fn from_dense(probs: &[f64], excluded: &[u32], site: EmbeddingSite) -> Result<Self> {
        let entries = probs
            .iter()
            .enumerate()
            .filter(|(id, _)| !excluded.contains(&(*id as u32)))
            .map(|(id, &p)| (id as u32, p))
            .collect();
        Self::new(entries, site)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self) -> Option<(u32, f64)> {
        self.entries.first().copied()
    }

    pub fn probability_of(&self, vocab_id: u32) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == vocab_id).map(|e| e.1)
    }
}

/// 1-based rank of `vocab_id` under the deterministic order.
pub fn rank_of(dist: &PredictionDistribution, vocab_id: u32) -> Result<usize> {
    dist.entries
        .iter()
        .position(|e| e.0 == vocab_id)
        .map(|p| p + 1)
        .ok_or(Error::UnknownVocabId(vocab_id))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingOutcome {
    pub site: EmbeddingSite,
    pub rank_of_original: usize,
    pub decoded_bit: u8,
}

pub fn decode_bit(dist: &PredictionDistribution, site: &EmbeddingSite) -> Result<CodingOutcome> {
    let rank = rank_of(dist, site.vocab_id)?;
    Ok(CodingOutcome {
        site: site.clone(),
        rank_of_original: rank,
        decoded_bit: u8::from(rank != 1),
    })
}

/// Target-distribution criterion: the original word sits in the first
/// interval for bit 0 and in the second interval for bit 1.
pub fn satisfies_target(dist: &PredictionDistribution, site: &EmbeddingSite, bit: u8) -> Result<bool> {
    Ok(decode_bit(dist, site)?.decoded_bit == bit)
}

/// Supervision label steering the site toward `bit`.
///
/// * bit 0: the original word.
/// * bit 1, original ranked first: the best-ranked other word (normally the
///   second entry).
/// * bit 1, original not first: the current top word.
pub fn target_word(dist: &PredictionDistribution, site: &EmbeddingSite, bit: u8) -> Result<u32> {
    if dist.len() < 2 {
        return Err(Error::DegenerateDistribution(dist.len()));
    }
    let rank = rank_of(dist, site.vocab_id)?;
    Ok(match (bit, rank) {
        (0, _) => site.vocab_id,
        (_, 1) => dist
            .entries
            .iter()
            .map(|e| e.0)
            .find(|&id| id != site.vocab_id)
            .expect("at least two entries"),
        _ => dist.entries[0].0,
    })
}

/// An ordered bit string with an explicit length.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BitMessage {
    pub bits: Vec<u8>,
    pub declared_length: usize,
}

impl BitMessage {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidMessage(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Self {
            declared_length: bits.len(),
            bits,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::InvalidMessage(format!(
                    "unexpected character {other:?} in bit string"
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    /// Parses `LEN:HEX` (bits packed MSB first, zero padded) or bare `HEX`
    /// (length = 4 bits per digit).
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim();
        let (declared, digits) = match s.split_once(':') {
            Some((len, digits)) => {
                let len = len
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidMessage(format!("bad declared length {len:?}")))?;
                (Some(len), digits)
            }
            None => (None, s),
        };
        let mut bits = Vec::with_capacity(digits.len() * 4);
        for c in digits.chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::InvalidMessage(format!("unexpected character {c:?} in hex")))?;
            bits.extend((0..4).rev().map(|i| ((v >> i) & 1) as u8));
        }
        if let Some(len) = declared {
            if len > bits.len() || bits.len() - len >= 8 {
                return Err(Error::InvalidMessage(format!(
                    "declared length {len} does not fit {} hex digits",
                    digits.len()
                )));
            }
            if bits[len..].iter().any(|&b| b != 0) {
                return Err(Error::InvalidMessage("padding bits must be zero".into()));
            }
            bits.truncate(len);
        }
        Self::new(bits)
    }

    /// `LEN:HEX`, bits packed MSB first into whole bytes.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            bytes[i / 8] |= b << (7 - i % 8);
        }
        format!("{}:{}", self.bits.len(), hex::encode(bytes))
    }
}

impl fmt::Display for BitMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

impl FromStr for BitMessage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_bit_string(s)
    }
}

/// Pairs message bits with plan sites in plan order; trailing sites stay
/// unassigned.
pub fn assign_bits(plan: &EmbeddingPlan, message: &BitMessage) -> Result<Vec<(EmbeddingSite, u8)>> {
    if message.declared_length != message.bits.len() {
        return Err(Error::InvalidMessage("declared length differs from bit count".into()));
    }
    if message.len() > plan.capacity_bits {
        return Err(Error::CapacityExceeded {
            needed: message.len(),
            capacity: plan.capacity_bits,
        });
    }
    Ok(plan
        .sites
        .iter()
        .zip(&message.bits)
        .map(|(s, &b)| (s.clone(), b))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(id: u32) -> EmbeddingSite {
        EmbeddingSite {
            sentence_index: 0,
            token_index: 0,
            original_word: "w".into(),
            vocab_id: id,
        }
    }

    fn dist(entries: &[(u32, f64)], original: u32) -> PredictionDistribution {
        PredictionDistribution::new(entries.to_vec(), site(original)).unwrap()
    }

    #[test]
    fn rank_direct_order() {
        let d = dist(&[(7, 0.5), (3, 0.3), (9, 0.2)], 3);
        assert_eq!(rank_of(&d, 3).unwrap(), 2);
        assert_eq!(rank_of(&d, 7).unwrap(), 1);
        assert!(matches!(rank_of(&d, 4), Err(Error::UnknownVocabId(4))));
    }

    #[test]
    fn ties_go_to_lower_id() {
        let d = dist(&[(7, 0.4), (3, 0.4), (1, 0.2)], 3);
        assert_eq!(rank_of(&d, 3).unwrap(), 1);
        assert_eq!(rank_of(&d, 7).unwrap(), 2);
    }

    #[test]
    fn decode_rule() {
        let d = dist(&[(1, 0.6), (2, 0.1), (3, 0.1), (4, 0.1), (5, 0.1)], 1);
        assert_eq!(decode_bit(&d, &site(1)).unwrap().decoded_bit, 0);
        let d5 = dist(&[(1, 0.3), (2, 0.2), (3, 0.2), (4, 0.2), (5, 0.1)], 5);
        let out = decode_bit(&d5, &site(5)).unwrap();
        assert_eq!(out.rank_of_original, 5);
        assert_eq!(out.decoded_bit, 1);
    }

    #[test]
    fn criterion_cases() {
        let d = dist(&[(1, 0.6), (2, 0.4)], 1);
        assert!(satisfies_target(&d, &site(1), 0).unwrap());
        assert!(!satisfies_target(&d, &site(1), 1).unwrap());
        assert!(satisfies_target(&d, &site(2), 1).unwrap());
    }

    #[test]
    fn three_target_cases() {
        // ids: 10 = original "walk", 11 = "walked", 12 = "found"
        let top = dist(&[(10, 0.5), (11, 0.3), (12, 0.2)], 10);
        assert_eq!(target_word(&top, &site(10), 0).unwrap(), 10);
        assert_eq!(target_word(&top, &site(10), 1).unwrap(), 11);
        let fourth = dist(&[(12, 0.4), (11, 0.3), (13, 0.2), (10, 0.1)], 10);
        assert_eq!(target_word(&fourth, &site(10), 1).unwrap(), 12);
        assert_eq!(target_word(&fourth, &site(10), 0).unwrap(), 10);
        let single = dist(&[(10, 1.0)], 10);
        assert!(matches!(
            target_word(&single, &site(10), 1),
            Err(Error::DegenerateDistribution(1))
        ));
    }

    #[test]
    fn bit_and_hex_forms() {
        let m = BitMessage::from_bit_string("101100111").unwrap();
        assert_eq!(m.declared_length, 9);
        assert_eq!(m.to_hex(), "9:b380");
        assert_eq!(BitMessage::from_hex("9:b380").unwrap(), m);
        assert_eq!(BitMessage::from_hex("a").unwrap().to_bit_string(), "1010");
        assert!(BitMessage::from_hex("9:b381").is_err());
        assert!(BitMessage::from_hex("3:b380").is_err());
        assert!(BitMessage::from_bit_string("10x").is_err());
        assert_eq!(BitMessage::empty().to_hex(), "0:");
        assert_eq!(BitMessage::from_hex("0:").unwrap(), BitMessage::empty());
    }

    fn plan(n: usize) -> EmbeddingPlan {
        EmbeddingPlan {
            sites: (0..n)
                .map(|i| EmbeddingSite {
                    token_index: i,
                    ..site(i as u32)
                })
                .collect(),
            capacity_bits: n,
            plan_fingerprint: String::new(),
        }
    }

    #[test]
    fn assign_prefix_rule() {
        let m = BitMessage::from_bit_string("101").unwrap();
        let a = assign_bits(&plan(3), &m).unwrap();
        assert_eq!(a.iter().map(|x| x.1).collect::<Vec<_>>(), vec![1, 0, 1]);
        let a = assign_bits(&plan(5), &BitMessage::from_bit_string("10").unwrap()).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].0.token_index, 1);
        let six = BitMessage::from_bit_string("101010").unwrap();
        assert!(matches!(
            assign_bits(&plan(5), &six),
            Err(Error::CapacityExceeded { needed: 6, capacity: 5 })
        ));
    }
}
