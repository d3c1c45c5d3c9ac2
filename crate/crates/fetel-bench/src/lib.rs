//! Benchmark helpers shared by the criterion targets.

use fetel_core::corpus::MentionExample;
use fetel_core::features::{featurize_dataset, PreparedExample};
use fetel_core::model::{EncodedMention, ModelConfig, TypingModel};
use fetel_core::synthetic::{generate, SyntheticData, SyntheticSpec};

/// A generated corpus plus a freshly initialized desk-scale model, enough to
/// drive linking, loss, and scoring benchmarks.
pub struct BenchSetup {
    pub data: SyntheticData,
    pub model: TypingModel,
    pub prepared: Vec<PreparedExample>,
    pub encoded: Vec<EncodedMention>,
}

pub fn setup(n_mentions: usize) -> BenchSetup {
    let spec = SyntheticSpec {
        n_mentions,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec);
    let config = ModelConfig {
        embed_dim: spec.embed_dim,
        recurrent_hidden: 16,
        mlp_hidden: 32,
        type_embed_dim: 24,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let model = TypingModel::new(config, data.vocab.len(), &data.table, 1).unwrap();
    let prepared = featurize_dataset(
        &data.examples,
        &data.kb,
        &data.mapping,
        &data.vocab,
        &data.table,
    )
    .unwrap();
    let encoded = prepared
        .iter()
        .map(|p| p.encode_clean(&data.vocab).unwrap())
        .collect();
    BenchSetup {
        data,
        model,
        prepared,
        encoded,
    }
}

pub fn surfaces(data: &SyntheticData) -> Vec<String> {
    data.examples.iter().map(MentionExample::surface).collect()
}
