//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes and switches for the typing model.
///
/// The defaults are the published configuration: 300-dimensional word
/// embeddings, two bidirectional recurrent layers of 250 units per direction,
/// a three-layer MLP with 500-unit hidden layers, and 500-dimensional type
/// embeddings. The fusion MLP's output size always equals `type_embed_dim`
/// so that type scores are plain dot products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub recurrent_hidden: usize,
    pub recurrent_layers: usize,
    pub mlp_hidden: usize,
    pub mlp_layers: usize,
    pub type_embed_dim: usize,
    pub dropout_rate: f64,
    /// Ablation switch: when false, the KB type vector and the link
    /// confidence are zeroed before fusion.
    pub use_el_features: bool,
    /// Dropout between the two recurrent layers; off by default.
    pub recurrent_inter_layer_dropout: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 300,
            recurrent_hidden: 250,
            recurrent_layers: 2,
            mlp_hidden: 500,
            mlp_layers: 3,
            type_embed_dim: 500,
            dropout_rate: 0.5,
            use_el_features: true,
            recurrent_inter_layer_dropout: false,
        }
    }
}

impl ModelConfig {
    /// Size of the context representation: both directions concatenated.
    pub fn context_dim(&self) -> usize {
        2 * self.recurrent_hidden
    }

    /// Size of the fused feature vector `f_c (+) f_s (+) f_e (+) g`.
    pub fn fused_dim(&self, k: usize) -> usize {
        self.context_dim() + self.embed_dim + k + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("recurrent_hidden", self.recurrent_hidden),
            ("recurrent_layers", self.recurrent_layers),
            ("mlp_hidden", self.mlp_hidden),
            ("mlp_layers", self.mlp_layers),
            ("type_embed_dim", self.type_embed_dim),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::DimensionMismatch {
                    context: name.to_string(),
                    expected: 1,
                    found: 0,
                });
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::SchemaViolation {
                record: 0,
                detail: format!("dropout_rate {} outside [0, 1)", self.dropout_rate),
            });
        }
        Ok(())
    }

    /// Small dimensions for unit tests and desk-scale corpora.
    pub fn tiny(
        embed_dim: usize,
        recurrent_hidden: usize,
        mlp_hidden: usize,
        type_embed_dim: usize,
    ) -> Self {
        ModelConfig {
            embed_dim,
            recurrent_hidden,
            mlp_hidden,
            type_embed_dim,
            ..ModelConfig::default()
        }
    }
}
