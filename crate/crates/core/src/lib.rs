//! Domain layer for breast-MRI fibroglandular-tissue segmentation: volume
//! types and the crop-then-segment preprocessing, a deterministic phantom
//! generator for desk-scale experiments, segmentation metrics (DSC, ASSD),
//! clinical quantities (breast density, BPE), the statistics layer, NIfTI /
//! manifest IO, and report rendering.

pub mod error;
pub mod evaluate;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod preprocess;
pub mod report;
pub mod stats;
pub mod volume;

pub use error::{CoreError, Result};
pub use volume::{BinaryMask, BoundingBox, BreastCrop, Case, CropPair, Volume};
