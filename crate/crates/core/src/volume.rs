//! Core domain types: volumes, binary masks, cases, crops.
//!
//! Axis convention everywhere: `(depth, height, width)` with depth = slice
//! axis; multichannel arrays prepend the channel axis. Spacing is millimeters
//! per axis in the same (depth, height, width) order.

use ndarray::{Array3, Array4, Zip};

use crate::error::{CoreError, Result};

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(CoreError::InvalidVolume(format!(
            "spacing must be positive and finite, got {spacing:?}"
        )));
    }
    Ok(())
}

fn check_dims(shape: &[usize]) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(CoreError::InvalidVolume(format!(
            "all dimensions must be >= 1, got {shape:?}"
        )));
    }
    Ok(())
}

pub fn spacing_close(a: [f64; 3], b: [f64; 3]) -> bool {
    a.iter()
        .zip(&b)
        .all(|(&x, &y)| (x - y).abs() <= 1e-4 * x.abs().max(y.abs()).max(1.0))
}

/// A 3D scalar image with voxel spacing in mm.
#[derive(Clone, Debug)]
pub struct Volume {
    pub data: Array3<f32>,
    pub spacing: [f64; 3],
    pub id: String,
}

impl Volume {
    pub fn new(data: Array3<f32>, spacing: [f64; 3], id: impl Into<String>) -> Result<Volume> {
        check_dims(data.shape())?;
        check_spacing(spacing)?;
        Ok(Volume {
            data,
            spacing,
            id: id.into(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[0], s[1], s[2]]
    }

    /// Ingestion guard: rejects NaN/Inf voxels.
    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidVolume(format!(
                "volume '{}' contains non-finite values",
                self.id
            )));
        }
        Ok(())
    }
}

/// A 3D label volume over {0, 1}.
#[derive(Clone, Debug)]
pub struct BinaryMask {
    pub data: Array3<u8>,
    pub spacing: [f64; 3],
    pub id: String,
}

impl BinaryMask {
    pub fn new(data: Array3<u8>, spacing: [f64; 3], id: impl Into<String>) -> Result<BinaryMask> {
        check_dims(data.shape())?;
        check_spacing(spacing)?;
        if data.iter().any(|&v| v > 1) {
            return Err(CoreError::InvalidVolume(
                "mask values must be exactly 0 or 1".into(),
            ));
        }
        Ok(BinaryMask {
            data,
            spacing,
            id: id.into(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[0], s[1], s[2]]
    }

    pub fn count_positive(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}

/// One patient examination: pre/post-contrast images plus segmentations.
/// `fgt_mask` is optional at inference time.
#[derive(Clone, Debug)]
pub struct Case {
    pub case_id: String,
    pub pre: Volume,
    pub post: Volume,
    pub breast_mask: BinaryMask,
    pub fgt_mask: Option<BinaryMask>,
}

impl Case {
    /// Checks the cross-member invariants: shared shape/spacing and
    /// FGT ⊆ breast.
    pub fn validate(&self) -> Result<()> {
        let shape = self.pre.shape();
        let spacing = self.pre.spacing;
        let same =
            |s: [usize; 3]| -> bool { s == shape };
        if !same(self.post.shape()) || !same(self.breast_mask.shape()) {
            return Err(CoreError::ShapeMismatch {
                context: format!("case '{}'", self.case_id),
                a: shape.to_vec(),
                b: self.post.shape().to_vec(),
            });
        }
        if !spacing_close(self.post.spacing, spacing)
            || !spacing_close(self.breast_mask.spacing, spacing)
        {
            return Err(CoreError::InvalidVolume(format!(
                "case '{}': members disagree on spacing",
                self.case_id
            )));
        }
        if let Some(fgt) = &self.fgt_mask {
            if fgt.shape() != shape || !spacing_close(fgt.spacing, spacing) {
                return Err(CoreError::ShapeMismatch {
                    context: format!("case '{}' fgt mask", self.case_id),
                    a: shape.to_vec(),
                    b: fgt.shape().to_vec(),
                });
            }
            let mut violations = 0usize;
            Zip::from(&fgt.data)
                .and(&self.breast_mask.data)
                .for_each(|&f, &b| {
                    if f == 1 && b == 0 {
                        violations += 1;
                    }
                });
            if violations > 0 {
                return Err(CoreError::InvalidVolume(format!(
                    "case '{}': {} FGT voxels outside the breast mask",
                    self.case_id, violations
                )));
            }
        }
        Ok(())
    }
}

/// Half-open voxel box `[min, max)` in (depth, height, width) index space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn shape(&self) -> [usize; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn contains_box(&self, shape: [usize; 3]) -> bool {
        self.min.iter().zip(&self.max).all(|(lo, hi)| lo < hi)
            && self.max.iter().zip(&shape).all(|(hi, dim)| hi <= dim)
    }

    /// Dilates by `margin` voxels per side, clipped to `shape`.
    pub fn dilate(&self, margin: usize, shape: [usize; 3]) -> BoundingBox {
        let mut out = *self;
        for ax in 0..3 {
            out.min[ax] = out.min[ax].saturating_sub(margin);
            out.max[ax] = (out.max[ax] + margin).min(shape[ax]);
        }
        out
    }
}

/// One breast side extracted by [`crate::preprocess::split_breasts`]:
/// a 2-channel (pre, subtraction) image crop plus the mask crops, with the
/// bounding box locating it in the original volume.
#[derive(Clone, Debug)]
pub struct BreastCrop {
    /// `[2, d, h, w]`, channel 0 = pre-contrast, channel 1 = subtraction.
    pub image: Array4<f32>,
    pub breast: Array3<u8>,
    pub fgt: Option<Array3<u8>>,
    pub bb: BoundingBox,
}

/// Left/right crops; a side is `None` when it contains no breast-mask voxel
/// (single-breast examinations).
#[derive(Clone, Debug)]
pub struct CropPair {
    pub left: Option<BreastCrop>,
    pub right: Option<BreastCrop>,
}

impl CropPair {
    pub fn sides(&self) -> impl Iterator<Item = &BreastCrop> {
        self.left.iter().chain(self.right.iter())
    }

    pub fn n_sides(&self) -> usize {
        self.left.is_some() as usize + self.right.is_some() as usize
    }
}
