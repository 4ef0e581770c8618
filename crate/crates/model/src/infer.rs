//! Sliding-window prediction, flip test-time augmentation, and cross-fold
//! majority-vote ensembling.

use ndarray::{s, Array3, Array4};
use serde::{Deserialize, Serialize};
use trabs_autograd::Var;
use trabs_core::preprocess::{or_masks, split_breasts, uncrop, zscore_channels};
use trabs_core::{BinaryMask, Case, CoreError};

use crate::error::Result;
use crate::net::Network;
use crate::window::pad_to_window;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Blend {
    Uniform,
    Gaussian,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub window: [usize; 3],
    /// Fractional overlap between adjacent windows, in [0, 1).
    pub overlap: f64,
    pub tta_flips: bool,
    pub blend: Blend,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            window: [32, 256, 256],
            overlap: 0.5,
            tta_flips: true,
            blend: Blend::Uniform,
        }
    }
}

impl InferenceConfig {
    pub fn toy() -> Self {
        InferenceConfig {
            window: [8, 64, 64],
            ..InferenceConfig::default()
        }
    }
}

/// Anything that maps a `[C, d, h, w]` crop to `[classes, d, h, w]` logits.
/// Implemented by [`Network`]; tests use closures via [`FnPredictor`].
pub trait Predictor {
    fn num_classes(&self) -> usize;
    fn predict_logits(&self, x: &Array4<f32>) -> Array4<f32>;
}

impl Predictor for Network {
    fn num_classes(&self) -> usize {
        self.config().num_classes()
    }

    fn predict_logits(&self, x: &Array4<f32>) -> Array4<f32> {
        let s = x.shape();
        let batched = x
            .clone()
            .into_shape_with_order((1, s[0], s[1], s[2], s[3]))
            .unwrap();
        let out = self.forward_eval(&Var::constant(batched.into_dyn()));
        let main = out.main.to_array();
        let ms = main.shape().to_vec();
        main.into_shape_with_order((ms[1], ms[2], ms[3], ms[4]))
            .unwrap()
    }
}

/// Adapter for stub models in tests.
pub struct FnPredictor<F: Fn(&Array4<f32>) -> Array4<f32>> {
    pub classes: usize,
    pub f: F,
}

impl<F: Fn(&Array4<f32>) -> Array4<f32>> Predictor for FnPredictor<F> {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict_logits(&self, x: &Array4<f32>) -> Array4<f32> {
        (self.f)(x)
    }
}

/// Window start offsets: stride-spaced, with a final boundary-clamped
/// window so the whole extent is covered.
pub fn window_positions(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    if dim <= window {
        return vec![0];
    }
    let stride = stride.max(1);
    let mut out = Vec::new();
    let mut p = 0usize;
    while p + window <= dim {
        out.push(p);
        p += stride;
    }
    let last = dim - window;
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

fn blend_weights(window: [usize; 3], blend: Blend) -> Array3<f32> {
    match blend {
        Blend::Uniform => Array3::from_elem((window[0], window[1], window[2]), 1.0),
        Blend::Gaussian => {
            let sigma: Vec<f64> = window.iter().map(|&w| (w as f64 / 8.0).max(1.0)).collect();
            let center: Vec<f64> = window.iter().map(|&w| (w as f64 - 1.0) / 2.0).collect();
            Array3::from_shape_fn((window[0], window[1], window[2]), |(z, y, x)| {
                let e = ((z as f64 - center[0]) / sigma[0]).powi(2)
                    + ((y as f64 - center[1]) / sigma[1]).powi(2)
                    + ((x as f64 - center[2]) / sigma[2]).powi(2);
                ((-0.5 * e).exp().max(1e-3)) as f32
            })
        }
    }
}

fn softmax_channels(logits: &mut Array4<f32>) {
    let s = logits.shape();
    let (classes, d, h, w) = (s[0], s[1], s[2], s[3]);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let mut max = f32::NEG_INFINITY;
                for c in 0..classes {
                    max = max.max(logits[(c, z, y, x)]);
                }
                let mut sum = 0.0f32;
                for c in 0..classes {
                    let e = (logits[(c, z, y, x)] - max).exp();
                    logits[(c, z, y, x)] = e;
                    sum += e;
                }
                for c in 0..classes {
                    logits[(c, z, y, x)] /= sum;
                }
            }
        }
    }
}

/// Tiles the crop with stride `window * (1 - overlap)`, accumulates
/// per-window softmax probabilities under the blend weighting, and
/// normalizes; output `[classes, d, h, w]` sums to 1 per voxel.
pub fn sliding_window_probs<P: Predictor>(
    model: &P,
    image: &Array4<f32>,
    cfg: &InferenceConfig,
) -> Array4<f32> {
    assert!((0.0..1.0).contains(&cfg.overlap), "overlap must be in [0,1)");
    let orig = image.shape().to_vec();
    let (padded, _, front) = pad_to_window(image, None, cfg.window);
    let ps = padded.shape().to_vec();
    let (d, h, w) = (ps[1], ps[2], ps[3]);
    let classes = model.num_classes();
    let weights = blend_weights(cfg.window, cfg.blend);

    let stride: Vec<usize> = cfg
        .window
        .iter()
        .map(|&wi| ((wi as f64) * (1.0 - cfg.overlap)).round().max(1.0) as usize)
        .collect();
    let zs = window_positions(d, cfg.window[0], stride[0]);
    let ys = window_positions(h, cfg.window[1], stride[1]);
    let xs = window_positions(w, cfg.window[2], stride[2]);

    let mut acc = Array4::<f32>::zeros((classes, d, h, w));
    let mut wacc = Array3::<f32>::zeros((d, h, w));
    for &z0 in &zs {
        for &y0 in &ys {
            for &x0 in &xs {
                let crop = padded
                    .slice(s![
                        ..,
                        z0..z0 + cfg.window[0],
                        y0..y0 + cfg.window[1],
                        x0..x0 + cfg.window[2]
                    ])
                    .to_owned();
                let mut probs = model.predict_logits(&crop);
                softmax_channels(&mut probs);
                for c in 0..classes {
                    let mut dst = acc.slice_mut(s![
                        c,
                        z0..z0 + cfg.window[0],
                        y0..y0 + cfg.window[1],
                        x0..x0 + cfg.window[2]
                    ]);
                    let src = probs.slice(s![c, .., .., ..]);
                    ndarray::Zip::from(&mut dst).and(&src).and(&weights).for_each(
                        |a, &p, &wt| {
                            *a += p * wt;
                        },
                    );
                }
                let mut dst = wacc.slice_mut(s![
                    z0..z0 + cfg.window[0],
                    y0..y0 + cfg.window[1],
                    x0..x0 + cfg.window[2]
                ]);
                dst.zip_mut_with(&weights, |a, &wt| *a += wt);
            }
        }
    }
    for c in 0..classes {
        let mut ch = acc.slice_mut(s![c, .., .., ..]);
        ch.zip_mut_with(&wacc, |a, &wt| *a /= wt);
    }
    // un-pad
    acc.slice(s![
        ..,
        front[0]..front[0] + orig[1],
        front[1]..front[1] + orig[2],
        front[2]..front[2] + orig[3]
    ])
    .to_owned()
}

/// Deterministic flip TTA: averages sliding-window probabilities over all
/// 8 axis-flip combinations (predictions un-flipped before averaging).
pub fn tta_predict<P: Predictor>(model: &P, image: &Array4<f32>, cfg: &InferenceConfig) -> Array4<f32> {
    if !cfg.tta_flips {
        return sliding_window_probs(model, image, cfg);
    }
    let mut mean: Option<Array4<f32>> = None;
    for bits in 0..8u8 {
        let flips: Vec<usize> = (0..3).filter(|i| bits >> i & 1 == 1).collect();
        let mut flipped = image.clone();
        for &ax in &flips {
            flipped.invert_axis(ndarray::Axis(ax + 1));
        }
        let flipped = flipped.as_standard_layout().to_owned();
        let mut probs = sliding_window_probs(model, &flipped, cfg);
        for &ax in &flips {
            probs.invert_axis(ndarray::Axis(ax + 1));
        }
        let probs = probs.as_standard_layout().to_owned();
        mean = Some(match mean {
            None => probs,
            Some(mut acc) => {
                acc.zip_mut_with(&probs, |a, &b| *a += b);
                acc
            }
        });
    }
    let mut out = mean.unwrap();
    out.mapv_inplace(|v| v / 8.0);
    out
}

/// Per-voxel argmax; ties resolve toward class 0 (background).
pub fn binarize(probs: &Array4<f32>) -> Array3<u8> {
    let s = probs.shape();
    let (classes, d, h, w) = (s[0], s[1], s[2], s[3]);
    Array3::from_shape_fn((d, h, w), |(z, y, x)| {
        let mut best_c = 0usize;
        let mut best_p = probs[(0, z, y, x)];
        for c in 1..classes {
            let p = probs[(c, z, y, x)];
            if p > best_p {
                best_p = p;
                best_c = c;
            }
        }
        u8::from(best_c == 1)
    })
}

/// Voxel positive iff strictly more than half of the masks are positive.
pub fn ensemble_majority_vote(masks: &[BinaryMask]) -> std::result::Result<BinaryMask, CoreError> {
    if masks.is_empty() {
        return Err(CoreError::EmptyEnsemble);
    }
    let shape = masks[0].shape();
    for m in masks {
        if m.shape() != shape {
            return Err(CoreError::ShapeMismatch {
                context: "ensemble_majority_vote".into(),
                a: shape.to_vec(),
                b: m.shape().to_vec(),
            });
        }
    }
    let half = masks.len();
    let mut counts = Array3::<u16>::zeros(shape);
    for m in masks {
        counts.zip_mut_with(&m.data, |c, &v| *c += v as u16);
    }
    let data = counts.mapv(|c| u8::from(2 * c as usize > half));
    BinaryMask::new(data, masks[0].spacing, format!("{}_vote", masks[0].id))
}

/// Full per-case pipeline: split, normalize, per-model TTA prediction,
/// binarize, un-crop and OR the sides, then majority vote across models.
/// Output is zero outside the breast crop boxes.
pub fn predict_case(
    models: &[&Network],
    case: &Case,
    cfg: &InferenceConfig,
    crop_margin: usize,
) -> Result<BinaryMask> {
    if models.is_empty() {
        return Err(CoreError::EmptyEnsemble.into());
    }
    let pair = split_breasts(case, crop_margin)?;
    let full_shape = case.breast_mask.shape();
    let mut sides = Vec::new();
    for side in pair.sides() {
        let mut image = side.image.clone();
        zscore_channels(&mut image);
        sides.push((image, side.bb));
    }

    let mut per_model = Vec::with_capacity(models.len());
    for model in models {
        let mut full = Array3::<u8>::zeros(full_shape);
        for (image, bb) in &sides {
            let probs = tta_predict(*model, image, cfg);
            let mask_crop = binarize(&probs);
            let placed = uncrop(&mask_crop, bb, full_shape)?;
            full = or_masks(&full, &placed);
        }
        per_model.push(BinaryMask::new(
            full,
            case.breast_mask.spacing,
            format!("{}_pred", case.case_id),
        )?);
    }
    Ok(ensemble_majority_vote(&per_model)?)
}
