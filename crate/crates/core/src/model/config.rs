use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters, stored as `config.json` beside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub model_type: String,
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    pub layer_norm_eps: f64,
}

pub const MODEL_TYPE: &str = "clstega-mlm";

impl MlmConfig {
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            model_type: MODEL_TYPE.to_string(),
            vocab_size,
            hidden_size: 64,
            num_hidden_layers: 2,
            num_attention_heads: 4,
            intermediate_size: 256,
            max_position_embeddings: 64,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_attention_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_type != MODEL_TYPE {
            return Err(Error::InvalidConfig(format!(
                "unsupported model type {:?}",
                self.model_type
            )));
        }
        if self.vocab_size < 2
            || self.hidden_size == 0
            || self.num_attention_heads == 0
            || self.hidden_size % self.num_attention_heads != 0
            || self.intermediate_size == 0
            || self.max_position_embeddings < 3
        {
            return Err(Error::InvalidConfig(format!("inconsistent model config {self:?}")));
        }
        Ok(())
    }
}
