//! Training losses: Dice + cross-entropy and its multi-scale extension.

use ndarray::{Array4, ArrayD};
use trabs_autograd::{ops, Var};

use crate::error::{ModelError, Result};
use crate::net::ModelOutput;

pub const DICE_SMOOTH: f64 = 1e-5;
pub const FOREGROUND: usize = 1;

fn target_dyn(target: &Array4<u8>) -> ArrayD<u8> {
    target.clone().into_dyn()
}

/// Soft-Dice (foreground class, smoothing in numerator and denominator)
/// plus voxel-mean cross-entropy; averaged over the batch.
/// `logits [B, C, D, H, W]`, `target [B, D, H, W]` in {0, 1}.
pub fn dice_ce_loss(logits: &Var<f32>, target: &Array4<u8>) -> Result<Var<f32>> {
    let ls = logits.shape();
    let ts = target.shape();
    if ls.len() != 5 || ls[0] != ts[0] || ls[2..] != ts[1..] {
        return Err(ModelError::Shape(format!(
            "dice_ce_loss: logits {ls:?} vs target {ts:?}"
        )));
    }
    Ok(ops::softmax_dice_ce(
        logits,
        &target_dyn(target),
        DICE_SMOOTH,
        FOREGROUND,
    ))
}

/// Nearest-neighbor mask downsampling with `out[i] = in[i * factor]`.
pub fn downsample_target_nn(target: &Array4<u8>, to: [usize; 3]) -> Array4<u8> {
    let s = target.shape();
    let (b, d, h, w) = (s[0], s[1], s[2], s[3]);
    assert!(
        d % to[0] == 0 && h % to[1] == 0 && w % to[2] == 0,
        "target {:?} not divisible down to {to:?}",
        &s[1..]
    );
    let f = [d / to[0], h / to[1], w / to[2]];
    Array4::from_shape_fn((b, to[0], to[1], to[2]), |(bi, z, y, x)| {
        target[(bi, z * f[0], y * f[1], x * f[2])]
    })
}

/// Deep-supervision loss: full-resolution term plus aux terms against
/// nearest-neighbor-downsampled targets, aux weights halving per level and
/// the whole set normalized to sum 1.
pub fn multiscale_loss(output: &ModelOutput, target: &Array4<u8>) -> Result<Var<f32>> {
    let mut weights = vec![1.0f64];
    for k in 0..output.aux.len() {
        weights.push(0.5f64.powi(k as i32 + 1));
    }
    let total: f64 = weights.iter().sum();

    let mut loss = dice_ce_loss(&output.main, target)?.scale(weights[0] / total);
    for (k, aux) in output.aux.iter().enumerate() {
        let asp = aux.shape();
        let small = downsample_target_nn(target, [asp[2], asp[3], asp[4]]);
        let term = dice_ce_loss(aux, &small)?.scale(weights[k + 1] / total);
        loss = loss.add(&term);
    }
    Ok(loss)
}

/// Dice+CE evaluated on blended probability maps (validation path where only
/// sliding-window probabilities exist, no logits). Probabilities are clamped
/// away from zero for the log.
pub fn dice_ce_from_probs(probs: &ndarray::Array4<f32>, target: &ndarray::Array3<u8>) -> f64 {
    let s = probs.shape();
    let (classes, d, h, w) = (s[0], s[1], s[2], s[3]);
    assert_eq!(target.shape(), &[d, h, w]);
    assert!(FOREGROUND < classes);
    let mut ce = 0.0f64;
    let mut p_sum = 0.0f64;
    let mut pt_sum = 0.0f64;
    let mut t_sum = 0.0f64;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let t = target[(z, y, x)] as usize;
                let pt = probs[(t, z, y, x)].max(1e-7) as f64;
                ce -= pt.ln();
                let pf = probs[(FOREGROUND, z, y, x)] as f64;
                p_sum += pf;
                if t == FOREGROUND {
                    t_sum += 1.0;
                    pt_sum += pf;
                }
            }
        }
    }
    let vox = (d * h * w) as f64;
    let dice = (2.0 * pt_sum + DICE_SMOOTH) / (p_sum + t_sum + DICE_SMOOTH);
    ce / vox + (1.0 - dice)
}
