//! Stage-two preprocessing: normalization, subtraction, channel stacking,
//! breast-mask-driven cropping and left/right splitting, and un-cropping.

use ndarray::{s, Array3, Array4, ArrayViewMut3};

use crate::error::{CoreError, Result};
use crate::volume::{BoundingBox, BreastCrop, Case, CropPair, Volume};

/// Std threshold below which a volume counts as constant.
const CONSTANT_STD: f64 = 1e-12;

/// Z-score normalization to mean 0, population std 1.
pub fn zscore_normalize(v: &Volume) -> Result<Volume> {
    if v.data.len() < 2 {
        return Err(CoreError::InvalidVolume(format!(
            "volume '{}' needs >= 2 voxels to normalize",
            v.id
        )));
    }
    let mut data = v.data.clone();
    if !zscore_view(data.view_mut()) {
        return Err(CoreError::ConstantVolume { id: v.id.clone() });
    }
    Ok(Volume {
        data,
        spacing: v.spacing,
        id: v.id.clone(),
    })
}

/// In-place z-score over an arbitrary view; returns false on constant input.
/// Accumulates in f64.
pub fn zscore_view(mut view: ArrayViewMut3<f32>) -> bool {
    let n = view.len() as f64;
    let mean = view.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = view
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std < CONSTANT_STD {
        return false;
    }
    let (m, s) = (mean as f32, std as f32);
    view.mapv_inplace(|v| (v - m) / s);
    true
}

/// Per-channel z-score of a crop; constant channels become all-zero
/// (the degenerate-input substitution for synthetic edge cases).
pub fn zscore_channels(image: &mut Array4<f32>) {
    let channels = image.shape()[0];
    for c in 0..channels {
        let mut view = image.slice_mut(s![c, .., .., ..]);
        if !zscore_view(view.view_mut()) {
            view.fill(0.0);
        }
    }
}

/// Voxel-wise `post - pre`.
pub fn subtract(post: &Volume, pre: &Volume) -> Result<Volume> {
    if post.shape() != pre.shape() {
        return Err(CoreError::ShapeMismatch {
            context: "subtract".into(),
            a: post.shape().to_vec(),
            b: pre.shape().to_vec(),
        });
    }
    if !crate::volume::spacing_close(post.spacing, pre.spacing) {
        return Err(CoreError::InvalidVolume(
            "subtract: spacing mismatch".into(),
        ));
    }
    Ok(Volume {
        data: &post.data - &pre.data,
        spacing: post.spacing,
        id: format!("{}_sub", post.id),
    })
}

/// Stacks (pre, subtraction) along a new leading channel axis.
/// Channel order is fixed: 0 = pre-contrast, 1 = subtraction.
pub fn stack_channels(pre: &Volume, sub: &Volume) -> Result<Array4<f32>> {
    if pre.shape() != sub.shape() {
        return Err(CoreError::ShapeMismatch {
            context: "stack_channels".into(),
            a: pre.shape().to_vec(),
            b: sub.shape().to_vec(),
        });
    }
    let [d, h, w] = pre.shape();
    let mut out = Array4::<f32>::zeros((2, d, h, w));
    out.slice_mut(s![0, .., .., ..]).assign(&pre.data);
    out.slice_mut(s![1, .., .., ..]).assign(&sub.data);
    Ok(out)
}

fn crop3<T: Clone>(data: &Array3<T>, bb: &BoundingBox) -> Array3<T> {
    data.slice(s![
        bb.min[0]..bb.max[0],
        bb.min[1]..bb.max[1],
        bb.min[2]..bb.max[2]
    ])
    .to_owned()
}

/// Tight bounding box of positive voxels within a width range, or None.
fn tight_bbox(mask: &Array3<u8>, w_lo: usize, w_hi: usize) -> Option<BoundingBox> {
    let mut min = [usize::MAX; 3];
    let mut max = [0usize; 3];
    let mut any = false;
    for ((d, h, w), &v) in mask.indexed_iter() {
        if v == 1 && w >= w_lo && w < w_hi {
            any = true;
            let idx = [d, h, w];
            for ax in 0..3 {
                min[ax] = min[ax].min(idx[ax]);
                max[ax] = max[ax].max(idx[ax] + 1);
            }
        }
    }
    any.then_some(BoundingBox { min, max })
}

/// Splits a case into left/right breast crops.
///
/// The width axis is divided at the index midway through the breast mask's
/// width-wise bounding box; each side's box is the tight bounding box of its
/// mask voxels dilated by `margin` voxels and clipped to the volume. Crops
/// carry raw image content (pre, post - pre) inside the rectangular box.
pub fn split_breasts(case: &Case, margin: usize) -> Result<CropPair> {
    if case.breast_mask.is_empty_mask() {
        return Err(CoreError::EmptyMask {
            id: case.breast_mask.id.clone(),
        });
    }
    let shape = case.breast_mask.shape();
    let whole = tight_bbox(&case.breast_mask.data, 0, shape[2]).unwrap();
    // A mask confined to one lateral half of the volume is a single-breast
    // examination: everything goes to that side. Otherwise split at the
    // mask bounding box's width-wise center.
    let volume_mid = shape[2] / 2;
    let mid = if whole.max[2] <= volume_mid {
        shape[2] // all left
    } else if whole.min[2] >= shape[2] - volume_mid {
        0 // all right
    } else {
        whole.min[2] + (whole.max[2] - whole.min[2]) / 2
    };

    let sub = subtract(&case.post, &case.pre)?;
    let make_side = |w_lo: usize, w_hi: usize| -> Option<BreastCrop> {
        let bb = tight_bbox(&case.breast_mask.data, w_lo, w_hi)?.dilate(margin, shape);
        let [d, h, w] = bb.shape();
        let mut image = Array4::<f32>::zeros((2, d, h, w));
        image
            .slice_mut(s![0, .., .., ..])
            .assign(&crop3(&case.pre.data, &bb));
        image
            .slice_mut(s![1, .., .., ..])
            .assign(&crop3(&sub.data, &bb));
        Some(BreastCrop {
            image,
            breast: crop3(&case.breast_mask.data, &bb),
            fgt: case.fgt_mask.as_ref().map(|m| crop3(&m.data, &bb)),
            bb,
        })
    };

    Ok(CropPair {
        left: make_side(0, mid),
        right: make_side(mid, shape[2]),
    })
}

/// Places a mask crop back into a zero full-size mask at `bb`.
pub fn uncrop(mask_crop: &Array3<u8>, bb: &BoundingBox, full_shape: [usize; 3]) -> Result<Array3<u8>> {
    if !bb.contains_box(full_shape) {
        return Err(CoreError::BoxOutOfBounds {
            min: bb.min,
            max: bb.max,
            shape: full_shape,
        });
    }
    let cs = mask_crop.shape();
    if [cs[0], cs[1], cs[2]] != bb.shape() {
        return Err(CoreError::ShapeMismatch {
            context: "uncrop".into(),
            a: cs.to_vec(),
            b: bb.shape().to_vec(),
        });
    }
    let mut full = Array3::<u8>::zeros(full_shape);
    full.slice_mut(s![
        bb.min[0]..bb.max[0],
        bb.min[1]..bb.max[1],
        bb.min[2]..bb.max[2]
    ])
    .assign(mask_crop);
    Ok(full)
}

/// Voxel-wise OR of equally shaped masks.
pub fn or_masks(a: &Array3<u8>, b: &Array3<u8>) -> Array3<u8> {
    let mut out = a.clone();
    out.zip_mut_with(b, |x, &y| *x = (*x | y) & 1);
    out
}
