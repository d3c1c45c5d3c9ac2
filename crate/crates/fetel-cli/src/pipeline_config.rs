//! Optional JSON pipeline configuration, merged under command-line flags
//! (flags win).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fetel_core::model::ModelConfig;
use fetel_core::training::TrainingConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub types: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub dev_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelConfig>,
    pub training: Option<TrainingConfig>,
    pub seed: Option<u64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {}", path.display(), e))?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("bad config {}: {}", path.display(), e))?;
        Ok(config)
    }
}

/// Flag value wins; config supplies the fallback.
pub fn merge<T: Clone>(flag: Option<T>, config: Option<&T>) -> Option<T> {
    flag.or_else(|| config.cloned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_unchanged() {
        let config = PipelineConfig {
            types: Some(PathBuf::from("types.txt")),
            kb: Some(PathBuf::from("kb.snapshot")),
            model: Some(ModelConfig::default()),
            training: Some(TrainingConfig::default()),
            seed: Some(9),
            ..PipelineConfig::default()
        };
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn flags_win_over_config() {
        let from_config = Some(PathBuf::from("config-path"));
        assert_eq!(
            merge(Some(PathBuf::from("flag-path")), from_config.as_ref()),
            Some(PathBuf::from("flag-path"))
        );
        assert_eq!(merge(None, from_config.as_ref()), from_config);
    }
}
