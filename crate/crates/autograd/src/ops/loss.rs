//! Fused softmax cross-entropy + soft-Dice loss with analytic backward.

use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};

use crate::element::Element;
use crate::tape::{common_tape, Var};

/// `logits [B, C, spatial..]`, `target [B, spatial..]` with class indices.
///
/// Per batch item: voxel-mean cross-entropy plus `1 - softDice` on the
/// `foreground` class (smoothing `smooth` added to numerator and
/// denominator); the result is averaged over the batch.
pub fn softmax_dice_ce<E: Element>(
    logits: &Var<E>,
    target: &ArrayD<u8>,
    smooth: f64,
    foreground: usize,
) -> Var<E> {
    let ls = logits.shape().to_vec();
    assert!(ls.len() >= 3, "logits must be [B, C, spatial..], got {ls:?}");
    let (batch, classes) = (ls[0], ls[1]);
    let spatial: usize = ls[2..].iter().product();
    assert!(foreground < classes);
    let mut tshape = vec![batch];
    tshape.extend_from_slice(&ls[2..]);
    assert_eq!(target.shape(), &tshape[..], "target shape mismatch");
    let tgt: Arc<Vec<u8>> = Arc::new(target.iter().copied().collect());
    for &t in tgt.iter() {
        assert!((t as usize) < classes, "target label {t} >= num_classes {classes}");
    }

    let eps = E::of_f64(smooth);
    let mut probs = vec![E::zero(); batch * classes * spatial];
    let mut num = vec![E::zero(); batch];
    let mut den = vec![E::zero(); batch];
    let mut total = E::zero();
    {
        let zsl = logits.data.as_slice_memory_order().unwrap();
        let two = E::of_f64(2.0);
        for b in 0..batch {
            let zb = &zsl[b * classes * spatial..(b + 1) * classes * spatial];
            let pb = &mut probs[b * classes * spatial..(b + 1) * classes * spatial];
            let tb = &tgt[b * spatial..(b + 1) * spatial];
            let mut ce = E::zero();
            let mut p_sum = E::zero();
            let mut pt_sum = E::zero();
            let mut t_sum = E::zero();
            for v in 0..spatial {
                let mut max = E::neg_infinity();
                for c in 0..classes {
                    let z = zb[c * spatial + v];
                    if z > max {
                        max = z;
                    }
                }
                let mut sum = E::zero();
                for c in 0..classes {
                    let e = (zb[c * spatial + v] - max).exp();
                    pb[c * spatial + v] = e;
                    sum += e;
                }
                let inv = E::one() / sum;
                for c in 0..classes {
                    pb[c * spatial + v] = pb[c * spatial + v] * inv;
                }
                let t = tb[v] as usize;
                // ln p_t = z_t - max - ln sum
                ce -= zb[t * spatial + v] - max - sum.ln();
                let pf = pb[foreground * spatial + v];
                p_sum += pf;
                if t == foreground {
                    t_sum += E::one();
                    pt_sum += pf;
                }
            }
            let vl = E::of_f64(spatial as f64);
            num[b] = two * pt_sum + eps;
            den[b] = p_sum + t_sum + eps;
            let dice_loss = E::one() - num[b] / den[b];
            total += ce / vl + dice_loss;
        }
    }
    let loss_val = total / E::of_f64(batch as f64);
    let out = ArrayD::from_elem(IxDyn(&[]), loss_val);

    let Some(tape) = common_tape(&[logits]) else {
        return Var::constant(out);
    };
    let p = logits.node;
    let l_dim = IxDyn(&ls);
    let id = tape.push(Box::new(move |g, sink| {
        let Some(pid) = p else { return };
        let gv = *g.iter().next().unwrap();
        let two = E::of_f64(2.0);
        let inv_b = E::one() / E::of_f64(batch as f64);
        let inv_v = E::one() / E::of_f64(spatial as f64);
        let mut dz = vec![E::zero(); batch * classes * spatial];
        for b in 0..batch {
            let pb = &probs[b * classes * spatial..(b + 1) * classes * spatial];
            let tb = &tgt[b * spatial..(b + 1) * spatial];
            let dzb = &mut dz[b * classes * spatial..(b + 1) * classes * spatial];
            let den2 = den[b] * den[b];
            for v in 0..spatial {
                let t = tb[v] as usize;
                let pf = pb[foreground * spatial + v];
                let tf = if t == foreground { E::one() } else { E::zero() };
                // d(dice_loss)/d p_fg at this voxel
                let q = -(two * tf * den[b] - num[b]) / den2;
                for c in 0..classes {
                    let pc = pb[c * spatial + v];
                    let indicator = if c == t { E::one() } else { E::zero() };
                    let dce = (pc - indicator) * inv_v;
                    let delta = if c == foreground { E::one() } else { E::zero() };
                    let ddice = q * pf * (delta - pc);
                    dzb[c * spatial + v] = (dce + ddice) * inv_b * gv;
                }
            }
        }
        sink(pid, ArrayD::from_shape_vec(l_dim.clone(), dz).unwrap());
    }));
    Var::tracked(out, id, tape)
}
