//! Networks, training, and inference for FGT segmentation: the TraBS
//! windowed-attention architecture and its convolutional baseline, the
//! Dice+CE multi-scale loss, augmentation, cross-validation splitting, the
//! early-stopping training loop, and sliding-window ensemble prediction.

pub mod augment;
pub mod baseline;
pub mod error;
pub mod infer;
pub mod layers;
pub mod loss;
pub mod net;
pub mod splits;
pub mod swin;
pub mod train;
pub mod trabs;
pub mod window;

pub use baseline::{BaselineConfig, BaselineUNet};
pub use error::{ModelError, Result};
pub use net::{
    load_checkpoint, save_checkpoint, CheckpointManifest, ModelKind, ModelOutput, NetConfig,
    Network,
};
pub use trabs::{TraBS, TraBSConfig};
