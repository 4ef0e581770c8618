//! Experiment configuration: TOML file plus CLI overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trabs_model::augment::AugmentConfig;
use trabs_model::infer::{Blend, InferenceConfig};
use trabs_model::train::TrainConfig;
use trabs_model::{BaselineConfig, ModelKind, NetConfig, TraBSConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model_kind: ModelKind,
    /// "default" or "toy"; explicit sections override preset fields.
    pub preset: String,
    pub folds: usize,
    pub crop_margin: usize,
    pub trabs: Option<TraBSConfig>,
    pub baseline: Option<BaselineConfig>,
    pub train: Option<TrainConfig>,
    pub inference: Option<InferenceConfig>,
    pub augment: Option<AugmentConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            model_kind: ModelKind::Trabs,
            preset: "default".into(),
            folds: 5,
            crop_margin: 2,
            trabs: None,
            baseline: None,
            train: None,
            inference: None,
            augment: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", path.display()))?;
        Ok(cfg)
    }

    fn toy(&self) -> bool {
        match self.preset.as_str() {
            "toy" => true,
            "default" => false,
            other => {
                // validated in net_config()
                let _ = other;
                false
            }
        }
    }

    pub fn validate_preset(&self) -> anyhow::Result<()> {
        if !matches!(self.preset.as_str(), "default" | "toy") {
            anyhow::bail!("unknown preset '{}', expected 'default' or 'toy'", self.preset);
        }
        Ok(())
    }

    pub fn net_config(&self) -> anyhow::Result<NetConfig> {
        self.validate_preset()?;
        Ok(match self.model_kind {
            ModelKind::Trabs => NetConfig::Trabs(self.trabs.clone().unwrap_or_else(|| {
                if self.toy() {
                    TraBSConfig::toy()
                } else {
                    TraBSConfig::default()
                }
            })),
            ModelKind::Baseline => NetConfig::Baseline(self.baseline.clone().unwrap_or_else(|| {
                if self.toy() {
                    BaselineConfig::toy()
                } else {
                    BaselineConfig::default()
                }
            })),
        })
    }

    pub fn train_config(&self) -> anyhow::Result<TrainConfig> {
        self.validate_preset()?;
        let mut cfg = self.train.clone().unwrap_or_else(|| {
            if self.toy() {
                TrainConfig::toy()
            } else {
                TrainConfig::default()
            }
        });
        cfg.seed = self.seed;
        cfg.crop_margin = self.crop_margin;
        if let Some(augment) = &self.augment {
            cfg.augment = augment.clone();
        }
        Ok(cfg)
    }

    pub fn inference_config(&self) -> anyhow::Result<InferenceConfig> {
        self.validate_preset()?;
        Ok(self.inference.clone().unwrap_or_else(|| {
            if self.toy() {
                InferenceConfig {
                    window: [8, 64, 64],
                    overlap: 0.5,
                    tta_flips: true,
                    blend: Blend::Uniform,
                }
            } else {
                InferenceConfig::default()
            }
        }))
    }

    /// Stable hash over the canonical JSON of the whole experiment config.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Metadata written next to every command's outputs so artifacts carry the
/// config hash and seed that produced them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

pub fn write_run_info(dir: &Path, info: &RunInfo) -> anyhow::Result<()> {
    let path = dir.join("run_info.json");
    std::fs::write(&path, serde_json::to_string_pretty(info)?)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

pub fn resolve_out_dir(out: &Path) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out)
        .map_err(|e| anyhow::anyhow!("cannot create output dir {}: {e}", out.display()))?;
    Ok(out.to_path_buf())
}
