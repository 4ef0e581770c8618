//! Uniform wrapper over the two architectures plus checkpoint persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trabs_autograd::{Initializer, ParamStore, ParamVars, Tape, Var};

use crate::baseline::{BaselineConfig, BaselineUNet};
use crate::error::{ModelError, Result};
use crate::trabs::{TraBS, TraBSConfig};

/// Full-resolution logits plus coarser deep-supervision logits
/// (aux[k] lives at the decoder level with in-plane factor 2^(k+1)).
pub struct ModelOutput {
    pub main: Var<f32>,
    pub aux: Vec<Var<f32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Trabs,
    Baseline,
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trabs" => Ok(ModelKind::Trabs),
            "baseline" | "nnunet" | "unet" => Ok(ModelKind::Baseline),
            other => Err(ModelError::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NetConfig {
    Trabs(TraBSConfig),
    Baseline(BaselineConfig),
}

impl NetConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            NetConfig::Trabs(_) => ModelKind::Trabs,
            NetConfig::Baseline(_) => ModelKind::Baseline,
        }
    }

    pub fn count_downsampling(&self) -> (usize, usize) {
        match self {
            NetConfig::Trabs(c) => c.count_downsampling(),
            NetConfig::Baseline(c) => c.count_downsampling(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            NetConfig::Trabs(c) => c.num_classes,
            NetConfig::Baseline(c) => c.num_classes,
        }
    }

    /// Stable hash of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

enum Arch {
    Trabs(TraBS),
    Baseline(BaselineUNet),
}

/// A built network owning its parameters.
pub struct Network {
    arch: Arch,
    store: ParamStore,
    config: NetConfig,
}

impl Network {
    /// Builds with parameters initialized deterministically from `seed`.
    pub fn build(config: &NetConfig, seed: u64) -> Result<Network> {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed);
        let arch = match config {
            NetConfig::Trabs(c) => Arch::Trabs(TraBS::build(c, &mut store, &mut init)?),
            NetConfig::Baseline(c) => Arch::Baseline(BaselineUNet::build(c, &mut store, &mut init)?),
        };
        Ok(Network {
            arch,
            store,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        match &self.arch {
            Arch::Trabs(m) => m.check_input(shape),
            Arch::Baseline(m) => m.check_input(shape),
        }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> ModelOutput {
        match &self.arch {
            Arch::Trabs(m) => m.forward(pv, x),
            Arch::Baseline(m) => m.forward(pv, x),
        }
    }

    /// Training-mode forward: parameters become tracked leaves on `tape`.
    pub fn forward_train(&self, tape: &Tape<f32>, x: Var<f32>) -> (ModelOutput, ParamVars) {
        let pv = self.store.leaves(tape);
        let out = self.forward(&pv, &x);
        (out, pv)
    }

    /// Inference-mode forward: nothing is recorded, logits are deterministic.
    pub fn forward_eval(&self, x: &Var<f32>) -> ModelOutput {
        let pv = self.store.constants();
        self.forward(&pv, x)
    }
}

/// Sidecar metadata stored next to the weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: NetConfig,
    pub config_hash: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn save_checkpoint(dir: &Path, network: &Network, manifest: &CheckpointManifest) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    network
        .store()
        .save(&dir.join(WEIGHTS_FILE))
        .map_err(|e| ModelError::io(dir.join(WEIGHTS_FILE), e))?;
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), json)
        .map_err(|e| ModelError::io(dir.join(MANIFEST_FILE), e))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Network, CheckpointManifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| ModelError::io(&manifest_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut network = Network::build(&manifest.config, manifest.seed)?;
    let weights = ParamStore::load(&dir.join(WEIGHTS_FILE))
        .map_err(|e| ModelError::io(dir.join(WEIGHTS_FILE), e))?;
    network
        .store_mut()
        .load_state(&weights)
        .map_err(ModelError::Checkpoint)?;
    Ok((network, manifest))
}
