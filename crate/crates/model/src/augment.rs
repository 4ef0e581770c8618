//! Training-time augmentation on normalized (image, mask) window pairs.
//!
//! Spatial transforms (flips, affine) move image and mask identically, with
//! nearest-neighbor resampling keeping the mask binary; intensity transforms
//! (ghosting, noise, blur, bias field, gamma) touch the image only. All
//! randomness is drawn from one seeded stream in a fixed order, so a sample
//! is fully determined by its seed.

use ndarray::{Array3, Array4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Per-axis flip probability.
    pub flip_prob: f64,
    pub affine_prob: f64,
    pub ghosting_prob: f64,
    pub noise_prob: f64,
    pub blur_prob: f64,
    pub bias_field_prob: f64,
    pub gamma_prob: f64,
    /// Max in-plane rotation in degrees.
    pub rotate_deg: f64,
    /// Relative scale jitter (0.1 -> scales in [0.9, 1.1]).
    pub scale_jitter: f64,
    /// Max |translation| in voxels per (depth, height, width).
    pub translate_vox: [f64; 3],
    /// Additive noise std range (on z-scored intensities).
    pub noise_std: (f64, f64),
    /// Max Gaussian blur sigma per axis in voxels.
    pub blur_sigma_max: [f64; 3],
    pub bias_strength: f64,
    /// Gamma exponent is exp(U(-gamma_log, gamma_log)).
    pub gamma_log: f64,
    pub ghost_intensity: (f64, f64),
    pub ghost_count: (usize, usize),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            affine_prob: 0.3,
            ghosting_prob: 0.3,
            noise_prob: 0.3,
            blur_prob: 0.3,
            bias_field_prob: 0.3,
            gamma_prob: 0.3,
            rotate_deg: 10.0,
            scale_jitter: 0.1,
            translate_vox: [1.0, 3.0, 3.0],
            noise_std: (0.02, 0.2),
            blur_sigma_max: [0.7, 1.2, 1.2],
            bias_strength: 0.3,
            gamma_log: 0.3,
            ghost_intensity: (0.2, 0.8),
            ghost_count: (2, 8),
        }
    }
}

impl AugmentConfig {
    /// All probabilities zero: identity transform.
    pub fn disabled() -> Self {
        AugmentConfig {
            flip_prob: 0.0,
            affine_prob: 0.0,
            ghosting_prob: 0.0,
            noise_prob: 0.0,
            blur_prob: 0.0,
            bias_field_prob: 0.0,
            gamma_prob: 0.0,
            ..AugmentConfig::default()
        }
    }
}

pub fn augment(
    image: &Array4<f32>,
    mask: &Array3<u8>,
    cfg: &AugmentConfig,
    seed: u64,
) -> (Array4<f32>, Array3<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = image.clone();
    let mut msk = mask.clone();

    // flips, independent per spatial axis
    for ax in 0..3 {
        if rng.gen_bool(cfg.flip_prob) {
            img.invert_axis(ndarray::Axis(ax + 1));
            msk.invert_axis(ndarray::Axis(ax));
            img = img.as_standard_layout().to_owned();
            msk = msk.as_standard_layout().to_owned();
        }
    }

    if rng.gen_bool(cfg.affine_prob) {
        let theta = rng.gen_range(-cfg.rotate_deg..=cfg.rotate_deg).to_radians();
        let j = cfg.scale_jitter;
        let scale = [
            rng.gen_range(1.0 - j..=1.0 + j),
            rng.gen_range(1.0 - j..=1.0 + j),
            rng.gen_range(1.0 - j..=1.0 + j),
        ];
        let t = [
            rng.gen_range(-cfg.translate_vox[0]..=cfg.translate_vox[0]),
            rng.gen_range(-cfg.translate_vox[1]..=cfg.translate_vox[1]),
            rng.gen_range(-cfg.translate_vox[2]..=cfg.translate_vox[2]),
        ];
        let (i2, m2) = apply_affine(&img, &msk, theta, scale, t);
        img = i2;
        msk = m2;
    }

    if rng.gen_bool(cfg.ghosting_prob) {
        let axis = if rng.gen_bool(0.5) { 1 } else { 2 }; // in-plane axes of the mask
        let ghosts = rng.gen_range(cfg.ghost_count.0..=cfg.ghost_count.1);
        let intensity = rng.gen_range(cfg.ghost_intensity.0..=cfg.ghost_intensity.1);
        apply_ghosting(&mut img, axis, ghosts, intensity as f32);
    }

    if rng.gen_bool(cfg.noise_prob) {
        let sigma = rng.gen_range(cfg.noise_std.0..=cfg.noise_std.1) as f32;
        for v in img.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * n as f32;
        }
    }

    if rng.gen_bool(cfg.blur_prob) {
        let sigmas = [
            rng.gen_range(0.0..=cfg.blur_sigma_max[0]),
            rng.gen_range(0.0..=cfg.blur_sigma_max[1]),
            rng.gen_range(0.0..=cfg.blur_sigma_max[2]),
        ];
        apply_gaussian_blur(&mut img, sigmas);
    }

    if rng.gen_bool(cfg.bias_field_prob) {
        let s = cfg.bias_strength;
        let coeffs: Vec<f64> = (0..9).map(|_| rng.gen_range(-s..=s)).collect();
        apply_bias_field(&mut img, &coeffs);
    }

    if rng.gen_bool(cfg.gamma_prob) {
        let gamma = rng.gen_range(-cfg.gamma_log..=cfg.gamma_log).exp();
        apply_gamma(&mut img, gamma as f32);
    }

    (img, msk)
}

/// Rotation about the depth axis, anisotropic scaling and translation;
/// trilinear for the image, nearest for the mask, zero outside.
fn apply_affine(
    image: &Array4<f32>,
    mask: &Array3<u8>,
    theta: f64,
    scale: [f64; 3],
    translate: [f64; 3],
) -> (Array4<f32>, Array3<u8>) {
    let s = image.shape();
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    let center = [
        (d as f64 - 1.0) / 2.0,
        (h as f64 - 1.0) / 2.0,
        (w as f64 - 1.0) / 2.0,
    ];
    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    // inverse map: undo translation, inverse-rotate in-plane, inverse-scale
    let src_of = |z: usize, y: usize, x: usize| -> [f64; 3] {
        let p = [
            z as f64 - center[0] - translate[0],
            y as f64 - center[1] - translate[1],
            x as f64 - center[2] - translate[2],
        ];
        let ry = cos_t * p[1] + sin_t * p[2];
        let rx = -sin_t * p[1] + cos_t * p[2];
        [
            p[0] / scale[0] + center[0],
            ry / scale[1] + center[1],
            rx / scale[2] + center[2],
        ]
    };

    let mut out_img = Array4::<f32>::zeros((c, d, h, w));
    let mut out_msk = Array3::<u8>::zeros((d, h, w));
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let src = src_of(z, y, x);
                // nearest for the mask
                let nz = src[0].round() as isize;
                let ny = src[1].round() as isize;
                let nx = src[2].round() as isize;
                if nz >= 0
                    && ny >= 0
                    && nx >= 0
                    && (nz as usize) < d
                    && (ny as usize) < h
                    && (nx as usize) < w
                {
                    out_msk[(z, y, x)] = mask[(nz as usize, ny as usize, nx as usize)];
                }
                // trilinear for the image
                let f = [src[0].floor(), src[1].floor(), src[2].floor()];
                let frac = [src[0] - f[0], src[1] - f[1], src[2] - f[2]];
                for ci in 0..c {
                    let mut acc = 0.0f64;
                    for (oz, wz) in [(0.0, 1.0 - frac[0]), (1.0, frac[0])] {
                        for (oy, wy) in [(0.0, 1.0 - frac[1]), (1.0, frac[1])] {
                            for (ox, wx) in [(0.0, 1.0 - frac[2]), (1.0, frac[2])] {
                                let (sz, sy, sx) =
                                    (f[0] + oz, f[1] + oy, f[2] + ox);
                                let weight = wz * wy * wx;
                                if weight == 0.0 {
                                    continue;
                                }
                                if sz >= 0.0
                                    && sy >= 0.0
                                    && sx >= 0.0
                                    && (sz as usize) < d
                                    && (sy as usize) < h
                                    && (sx as usize) < w
                                {
                                    acc += weight
                                        * image[(ci, sz as usize, sy as usize, sx as usize)] as f64;
                                }
                            }
                        }
                    }
                    out_img[(ci, z, y, x)] = acc as f32;
                }
            }
        }
    }
    (out_img, out_msk)
}

/// MRI ghosting: attenuates every `len/ghosts`-th frequency along one
/// in-plane axis (k-space line modulation), sparing the DC component.
fn apply_ghosting(image: &mut Array4<f32>, mask_axis: usize, ghosts: usize, intensity: f32) {
    let axis = ndarray::Axis(mask_axis + 1);
    let len = image.shape()[mask_axis + 1];
    if len < 4 || ghosts == 0 {
        return;
    }
    let step = (len / ghosts).max(2);
    let mut planner = FftPlanner::<f32>::new();
    let fft = planner.plan_fft_forward(len);
    let ifft = planner.plan_fft_inverse(len);
    let mut buf = vec![Complex::new(0.0f32, 0.0); len];
    for mut lane in image.lanes_mut(axis) {
        for (b, &v) in buf.iter_mut().zip(lane.iter()) {
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        let mut k = step;
        while k < len {
            buf[k] *= 1.0 - intensity;
            k += step;
        }
        ifft.process(&mut buf);
        let norm = 1.0 / len as f32;
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = b.re * norm;
        }
    }
}

/// Separable normalized Gaussian blur (border weights renormalized).
fn apply_gaussian_blur(image: &mut Array4<f32>, sigmas: [f64; 3]) {
    for ax in 0..3 {
        let sigma = sigmas[ax];
        if sigma < 0.15 {
            continue;
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let axis = ndarray::Axis(ax + 1);
        let len = image.shape()[ax + 1] as isize;
        let mut line = vec![0.0f32; len as usize];
        for mut lane in image.lanes_mut(axis) {
            for (l, &v) in line.iter_mut().zip(lane.iter()) {
                *l = v;
            }
            for (i, v) in lane.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                let mut wsum = 0.0f64;
                for (j, &kv) in kernel.iter().enumerate() {
                    let src = i as isize + j as isize - radius;
                    if src >= 0 && src < len {
                        acc += kv * line[src as usize] as f64;
                        wsum += kv;
                    }
                }
                *v = (acc / wsum) as f32;
            }
        }
    }
}

/// Multiplicative exp-polynomial bias field over normalized coordinates.
fn apply_bias_field(image: &mut Array4<f32>, coeffs: &[f64]) {
    let s = image.shape();
    let (d, h, w) = (s[1], s[2], s[3]);
    let norm = |i: usize, n: usize| 2.0 * (i as f64) / ((n - 1).max(1) as f64) - 1.0;
    let mut field = Array3::<f32>::zeros((d, h, w));
    for ((zi, yi, xi), v) in field.indexed_iter_mut() {
        let (z, y, x) = (norm(zi, d), norm(yi, h), norm(xi, w));
        let e = coeffs[0] * z
            + coeffs[1] * y
            + coeffs[2] * x
            + coeffs[3] * z * z
            + coeffs[4] * y * y
            + coeffs[5] * x * x
            + coeffs[6] * z * y
            + coeffs[7] * z * x
            + coeffs[8] * y * x;
        *v = e.exp() as f32;
    }
    for mut ch in image.outer_iter_mut() {
        ch.zip_mut_with(&field, |a, &f| *a *= f);
    }
}

/// Gamma on min-max-rescaled intensities, per channel.
fn apply_gamma(image: &mut Array4<f32>, gamma: f32) {
    for mut ch in image.outer_iter_mut() {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in ch.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        if span < 1e-6 {
            continue;
        }
        ch.mapv_inplace(|v| lo + span * ((v - lo) / span).powf(gamma));
    }
}
