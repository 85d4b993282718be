use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::util;

/// Major version of the key file schema. Readers reject other majors.
pub const KEY_SCHEMA_VERSION: u32 = 1;

/// Version of the locating rules (POS partition, eligibility) a key pins.
pub const LOCATING_RULES_VERSION: u32 = 1;

pub const DEFAULT_MODEL_ID: &str = "clstega-tiny-mlm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocatingStrategy {
    /// Non-functional words.
    #[serde(rename = "NFW")]
    NonFunctional,
    /// Functional words.
    #[serde(rename = "FW")]
    Functional,
    /// All words.
    #[serde(rename = "AW")]
    AllWords,
}

impl LocatingStrategy {
    pub fn admits(self, functional: bool) -> bool {
        match self {
            LocatingStrategy::NonFunctional => !functional,
            LocatingStrategy::Functional => functional,
            LocatingStrategy::AllWords => true,
        }
    }
}

impl FromStr for LocatingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NFW" => Ok(LocatingStrategy::NonFunctional),
            "FW" => Ok(LocatingStrategy::Functional),
            "AW" => Ok(LocatingStrategy::AllWords),
            _ => Err(Error::InvalidConfig(format!("unknown locating strategy {s:?}"))),
        }
    }
}

impl fmt::Display for LocatingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocatingStrategy::NonFunctional => "NFW",
            LocatingStrategy::Functional => "FW",
            LocatingStrategy::AllWords => "AW",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaskingStrategy {
    /// Full-position masking: every site of a sentence masked in one sample.
    #[serde(rename = "FPM")]
    FullPosition,
    /// Single-position augmented masking: one sample per site.
    #[serde(rename = "SPAM")]
    SinglePosition,
}

impl FromStr for MaskingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FPM" => Ok(MaskingStrategy::FullPosition),
            "SPAM" => Ok(MaskingStrategy::SinglePosition),
            _ => Err(Error::InvalidConfig(format!("unknown masking strategy {s:?}"))),
        }
    }
}

impl fmt::Display for MaskingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskingStrategy::FullPosition => "FPM",
            MaskingStrategy::SinglePosition => "SPAM",
        })
    }
}

/// Sites per sentence: a positive count or every eligible word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SiteCount {
    Count(usize),
    All,
}

impl SiteCount {
    pub fn limit(self) -> usize {
        match self {
            SiteCount::Count(n) => n,
            SiteCount::All => usize::MAX,
        }
    }
}

impl FromStr for SiteCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(SiteCount::All);
        }
        match s.parse::<usize>() {
            Ok(0) => Err(Error::InvalidConfig("k must be positive".into())),
            Ok(n) => Ok(SiteCount::Count(n)),
            Err(_) => Err(Error::InvalidConfig(format!(
                "k must be a positive integer or ALL, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for SiteCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteCount::Count(n) => write!(f, "{n}"),
            SiteCount::All => f.write_str("ALL"),
        }
    }
}

impl Serialize for SiteCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SiteCount::Count(n) => s.serialize_u64(*n as u64),
            SiteCount::All => s.serialize_str("ALL"),
        }
    }
}

impl<'de> Deserialize<'de> for SiteCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(n) => SiteCount::from_str(&n.to_string()),
            Raw::Text(t) => SiteCount::from_str(&t),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRecipe {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl FinetuneRecipe {
    /// AdamW settings used for full-size BERT checkpoints.
    pub fn bert() -> Self {
        Self {
            learning_rate: 5e-5,
            batch_size: 32,
            weight_decay: 0.01,
            max_epochs: 30,
            seed: 0,
        }
    }

    /// Settings for the bundled tiny model, which needs larger and more
    /// frequent steps to move within the same epoch budget.
    pub fn tiny() -> Self {
        Self {
            learning_rate: 2e-3,
            batch_size: 8,
            ..Self::bert()
        }
    }

    pub fn for_model(model_id: &str) -> Self {
        if model_id.starts_with("bert-") || model_id.contains("/bert-") {
            Self::bert()
        } else {
            Self::tiny()
        }
    }
}

/// Shared secret configuration for both communicating parties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StegoKey {
    pub schema_version: u32,
    pub locating_strategy: LocatingStrategy,
    pub k: SiteCount,
    pub model_id: String,
    pub tokenizer_id: String,
    pub min_sentence_words: usize,
    pub finetune: FinetuneRecipe,
    pub masking_strategy: MaskingStrategy,
    pub version: u32,
}

impl Default for StegoKey {
    fn default() -> Self {
        Self {
            schema_version: KEY_SCHEMA_VERSION,
            locating_strategy: LocatingStrategy::NonFunctional,
            k: SiteCount::Count(2),
            model_id: DEFAULT_MODEL_ID.to_string(),
            tokenizer_id: DEFAULT_MODEL_ID.to_string(),
            min_sentence_words: 10,
            finetune: FinetuneRecipe::tiny(),
            masking_strategy: MaskingStrategy::SinglePosition,
            version: LOCATING_RULES_VERSION,
        }
    }
}

impl StegoKey {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != KEY_SCHEMA_VERSION {
            return Err(Error::UnsupportedSchema {
                what: "key",
                found: self.schema_version,
                supported: KEY_SCHEMA_VERSION,
            });
        }
        if self.version != LOCATING_RULES_VERSION {
            return Err(Error::InvalidConfig(format!(
                "locating rules version {} is not supported",
                self.version
            )));
        }
        if self.k == SiteCount::Count(0) {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if self.model_id.trim().is_empty() || self.tokenizer_id.trim().is_empty() {
            return Err(Error::InvalidConfig("model and tokenizer ids must be non-empty".into()));
        }
        if self.min_sentence_words == 0 {
            return Err(Error::InvalidConfig("min_sentence_words must be at least 1".into()));
        }
        let f = &self.finetune;
        if !(f.learning_rate.is_finite() && f.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if f.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(f.weight_decay.is_finite() && f.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = util::read_json(path)?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::InvalidConfig("key file lacks schema_version".into()))?;
        if found != KEY_SCHEMA_VERSION as u64 {
            return Err(Error::UnsupportedSchema {
                what: "key",
                found: found as u32,
                supported: KEY_SCHEMA_VERSION,
            });
        }
        let key: StegoKey = serde_json::from_value(value)?;
        key.validate()?;
        Ok(key)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        util::write_json(path, self)
    }
}
