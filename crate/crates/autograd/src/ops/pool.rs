//! 3D max pooling.

use ndarray::{ArrayD, IxDyn};

use crate::element::Element;
use crate::tape::{common_tape, Var};

/// Max pooling over `x [B, C, D, H, W]` with the given kernel and stride
/// (no padding). Ties resolve to the lowest input index.
pub fn max_pool3d<E: Element>(x: &Var<E>, kernel: [usize; 3], stride: [usize; 3]) -> Var<E> {
    let xs = x.shape().to_vec();
    assert_eq!(xs.len(), 5, "max_pool3d input must be [B,C,D,H,W]");
    let (batch, c, d, h, w) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let (kd, kh, kw) = (kernel[0], kernel[1], kernel[2]);
    let (sd, sh, sw) = (stride[0], stride[1], stride[2]);
    assert!(d >= kd && h >= kh && w >= kw, "pool kernel exceeds input");
    let od = (d - kd) / sd + 1;
    let oh = (h - kh) / sh + 1;
    let ow = (w - kw) / sw + 1;
    let in_spatial = d * h * w;
    let out_spatial = od * oh * ow;

    let mut out = ArrayD::<E>::zeros(IxDyn(&[batch, c, od, oh, ow]));
    let mut argmax: Vec<u32> = vec![0; batch * c * out_spatial];
    {
        let xsl = x.data.as_slice_memory_order().unwrap();
        let osl = out.as_slice_memory_order_mut().unwrap();
        for bc in 0..batch * c {
            let xb = &xsl[bc * in_spatial..(bc + 1) * in_spatial];
            let ob = &mut osl[bc * out_spatial..(bc + 1) * out_spatial];
            let ab = &mut argmax[bc * out_spatial..(bc + 1) * out_spatial];
            for odp in 0..od {
                for ohp in 0..oh {
                    for owp in 0..ow {
                        let mut best = E::neg_infinity();
                        let mut best_idx = 0u32;
                        for z in 0..kd {
                            for y in 0..kh {
                                let base = ((odp * sd + z) * h + ohp * sh + y) * w + owp * sw;
                                for xk in 0..kw {
                                    let v = xb[base + xk];
                                    if v > best {
                                        best = v;
                                        best_idx = (base + xk) as u32;
                                    }
                                }
                            }
                        }
                        let o = (odp * oh + ohp) * ow + owp;
                        ob[o] = best;
                        ab[o] = best_idx;
                    }
                }
            }
        }
    }

    let Some(tape) = common_tape(&[x]) else {
        return Var::constant(out);
    };
    let p = x.node;
    let x_dim = IxDyn(&xs);
    let id = tape.push(Box::new(move |g, sink| {
        if let Some(pid) = p {
            let gsl = g.as_slice_memory_order().unwrap();
            let mut dx = vec![E::zero(); batch * c * in_spatial];
            for bc in 0..batch * c {
                let gb = &gsl[bc * out_spatial..(bc + 1) * out_spatial];
                let ab = &argmax[bc * out_spatial..(bc + 1) * out_spatial];
                let dxb = &mut dx[bc * in_spatial..(bc + 1) * in_spatial];
                for (o, &gv) in gb.iter().enumerate() {
                    dxb[ab[o] as usize] += gv;
                }
            }
            sink(pid, ArrayD::from_shape_vec(x_dim.clone(), dx).unwrap());
        }
    }));
    Var::tracked(out, id, tape)
}
