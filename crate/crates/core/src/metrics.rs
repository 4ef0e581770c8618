//! Segmentation metrics (DSC, ASSD) and clinical quantities (breast density,
//! BPE).
//!
//! ASSD uses border voxels (positive voxels with a face-adjacent background
//! or out-of-volume neighbor) and exact nearest-surface distances from an
//! anisotropic squared Euclidean distance transform, so it matches the
//! brute-force pairwise oracle to rounding error.

use ndarray::Array3;

use crate::error::{CoreError, Result};
use crate::volume::{spacing_close, BinaryMask, Volume};

/// Dice similarity coefficient `2|A∩B| / (|A|+|B|)`; 1.0 when both empty.
/// Pure overlap measure: invariant to spacing.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(CoreError::ShapeMismatch {
            context: "dice".into(),
            a: a.shape().to_vec(),
            b: b.shape().to_vec(),
        });
    }
    Ok(dice_arrays(&a.data, &b.data))
}

pub fn dice_arrays(a: &Array3<u8>, b: &Array3<u8>) -> f64 {
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    ndarray::Zip::from(a).and(b).for_each(|&x, &y| {
        na += (x == 1) as usize;
        nb += (y == 1) as usize;
        inter += (x == 1 && y == 1) as usize;
    });
    if na + nb == 0 {
        return 1.0;
    }
    2.0 * inter as f64 / (na + nb) as f64
}

/// Border voxels: positive with at least one face-adjacent (6-neighborhood)
/// background or out-of-volume neighbor.
pub fn surface_voxels(mask: &Array3<u8>) -> Vec<[usize; 3]> {
    let s = mask.shape();
    let (d, h, w) = (s[0], s[1], s[2]);
    let mut out = Vec::new();
    for ((z, y, x), &v) in mask.indexed_iter() {
        if v != 1 {
            continue;
        }
        let mut border = false;
        let neighbors: [(isize, isize, isize); 6] = [
            (-1, 0, 0),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ];
        for (dz, dy, dx) in neighbors {
            let (nz, ny, nx) = (z as isize + dz, y as isize + dy, x as isize + dx);
            if nz < 0
                || nz >= d as isize
                || ny < 0
                || ny >= h as isize
                || nx < 0
                || nx >= w as isize
                || mask[(nz as usize, ny as usize, nx as usize)] == 0
            {
                border = true;
                break;
            }
        }
        if border {
            out.push([z, y, x]);
        }
    }
    out
}

/// 1D squared-distance lower envelope (Felzenszwalb–Huttenlocher) with an
/// anisotropic step: `out[i] = min_j f[j] + (step * (i - j))^2`.
fn edt_1d(f: &[f64], step: f64, out: &mut [f64]) {
    let n = f.len();
    let step2 = step * step;
    let sites: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut v: Vec<usize> = Vec::with_capacity(sites.len()); // indices into `sites`
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    v.push(0);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    let intersect = |qi: usize, ri: usize| -> f64 {
        let (q, r) = (sites[qi] as f64, sites[ri] as f64);
        ((f[sites[qi]] + step2 * q * q) - (f[sites[ri]] + step2 * r * r))
            / (2.0 * step2 * (q - r))
    };
    for qi in 1..sites.len() {
        let mut s = intersect(qi, *v.last().unwrap());
        while s <= z[v.len() - 1] {
            v.pop();
            z.pop();
            s = intersect(qi, *v.last().unwrap());
        }
        v.push(qi);
        z.pop();
        z.push(s);
        z.push(f64::INFINITY);
    }
    let mut k = 0usize;
    for i in 0..n {
        while z[k + 1] < i as f64 {
            k += 1;
        }
        let site = sites[v[k]];
        let diff = step * (i as f64 - site as f64);
        out[i] = f[site] + diff * diff;
    }
}

/// Exact anisotropic squared EDT: distance in mm² from every voxel to the
/// nearest site (site voxels get 0).
pub fn squared_edt(sites: &[[usize; 3]], shape: [usize; 3], spacing: [f64; 3]) -> Array3<f64> {
    let mut dist = Array3::<f64>::from_elem(shape, f64::INFINITY);
    for &[z, y, x] in sites {
        dist[(z, y, x)] = 0.0;
    }
    let [d, h, w] = shape;
    // axis 0 (depth)
    let mut fbuf = vec![0.0f64; d.max(h).max(w)];
    let mut obuf = vec![0.0f64; d.max(h).max(w)];
    for y in 0..h {
        for x in 0..w {
            for z in 0..d {
                fbuf[z] = dist[(z, y, x)];
            }
            edt_1d(&fbuf[..d], spacing[0], &mut obuf[..d]);
            for z in 0..d {
                dist[(z, y, x)] = obuf[z];
            }
        }
    }
    // axis 1 (height)
    for z in 0..d {
        for x in 0..w {
            for y in 0..h {
                fbuf[y] = dist[(z, y, x)];
            }
            edt_1d(&fbuf[..h], spacing[1], &mut obuf[..h]);
            for y in 0..h {
                dist[(z, y, x)] = obuf[y];
            }
        }
    }
    // axis 2 (width)
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                fbuf[x] = dist[(z, y, x)];
            }
            edt_1d(&fbuf[..w], spacing[2], &mut obuf[..w]);
            for x in 0..w {
                dist[(z, y, x)] = obuf[x];
            }
        }
    }
    dist
}

/// Average symmetric surface distance in mm: the mean of the two directed
/// average nearest-surface distances (not the pooled mean).
pub fn assd(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(CoreError::ShapeMismatch {
            context: "assd".into(),
            a: a.shape().to_vec(),
            b: b.shape().to_vec(),
        });
    }
    if !spacing_close(a.spacing, b.spacing) {
        return Err(CoreError::InvalidVolume("assd: spacing mismatch".into()));
    }
    assd_arrays(&a.data, &b.data, a.spacing).map_err(|e| match e {
        CoreError::EmptyMask { .. } => CoreError::EmptyMask {
            id: if a.is_empty_mask() {
                a.id.clone()
            } else {
                b.id.clone()
            },
        },
        other => other,
    })
}

pub fn assd_arrays(a: &Array3<u8>, b: &Array3<u8>, spacing: [f64; 3]) -> Result<f64> {
    let surf_a = surface_voxels(a);
    let surf_b = surface_voxels(b);
    if surf_a.is_empty() || surf_b.is_empty() {
        return Err(CoreError::EmptyMask { id: "assd operand".into() });
    }
    let s = a.shape();
    let shape = [s[0], s[1], s[2]];
    let dist_to_b = squared_edt(&surf_b, shape, spacing);
    let dist_to_a = squared_edt(&surf_a, shape, spacing);
    let mean_a: f64 = surf_a
        .iter()
        .map(|&[z, y, x]| dist_to_b[(z, y, x)].sqrt())
        .sum::<f64>()
        / surf_a.len() as f64;
    let mean_b: f64 = surf_b
        .iter()
        .map(|&[z, y, x]| dist_to_a[(z, y, x)].sqrt())
        .sum::<f64>()
        / surf_b.len() as f64;
    Ok(0.5 * (mean_a + mean_b))
}

/// Breast density with the count of FGT voxels clipped to the breast.
#[derive(Clone, Copy, Debug)]
pub struct DensityResult {
    pub value: f64,
    /// FGT voxels found outside the breast mask (clipped before the ratio).
    pub clipped_voxels: usize,
}

/// `|FGT ∧ breast| / |breast|`; FGT voxels outside the breast are clipped
/// and reported.
pub fn breast_density(fgt: &BinaryMask, breast: &BinaryMask) -> Result<DensityResult> {
    if fgt.shape() != breast.shape() {
        return Err(CoreError::ShapeMismatch {
            context: "breast_density".into(),
            a: fgt.shape().to_vec(),
            b: breast.shape().to_vec(),
        });
    }
    let mut n_breast = 0usize;
    let mut n_fgt_in = 0usize;
    let mut clipped = 0usize;
    ndarray::Zip::from(&fgt.data).and(&breast.data).for_each(|&f, &b| {
        n_breast += (b == 1) as usize;
        if f == 1 {
            if b == 1 {
                n_fgt_in += 1;
            } else {
                clipped += 1;
            }
        }
    });
    if n_breast == 0 {
        return Err(CoreError::EmptyMask {
            id: breast.id.clone(),
        });
    }
    Ok(DensityResult {
        value: n_fgt_in as f64 / n_breast as f64,
        clipped_voxels: clipped,
    })
}

/// Background parenchymal enhancement as percent intensity change of FGT:
/// `100 * (mean_post - mean_pre) / mean_pre` over FGT voxels.
pub fn bpe(pre: &Volume, post: &Volume, fgt: &BinaryMask) -> Result<f64> {
    if pre.shape() != post.shape() || pre.shape() != fgt.shape() {
        return Err(CoreError::ShapeMismatch {
            context: "bpe".into(),
            a: pre.shape().to_vec(),
            b: fgt.shape().to_vec(),
        });
    }
    let mut n = 0usize;
    let mut sum_pre = 0.0f64;
    let mut sum_post = 0.0f64;
    ndarray::Zip::from(&pre.data)
        .and(&post.data)
        .and(&fgt.data)
        .for_each(|&p, &q, &f| {
            if f == 1 {
                n += 1;
                sum_pre += p as f64;
                sum_post += q as f64;
            }
        });
    if n == 0 {
        return Err(CoreError::EmptyMask { id: fgt.id.clone() });
    }
    let mean_pre = sum_pre / n as f64;
    let mean_post = sum_post / n as f64;
    if mean_pre <= 0.0 {
        return Err(CoreError::NonPositiveBaseline(mean_pre));
    }
    Ok(100.0 * (mean_post - mean_pre) / mean_pre)
}
