//! Layer and instance normalization with affine parameters.

use ndarray::{ArrayD, IxDyn};

use crate::element::Element;
use crate::tape::{common_tape, Var};

/// Shared per-row normalization. `gamma_of(row, f)` maps a (row, in-row
/// position) pair to the affine parameter index.
struct RowStats<E> {
    mean: Vec<E>,
    inv_std: Vec<E>,
}

fn forward_rows<E: Element>(
    x: &[E],
    rows: usize,
    f: usize,
    eps: E,
    out: &mut [E],
) -> RowStats<E> {
    let mut mean = vec![E::zero(); rows];
    let mut inv_std = vec![E::zero(); rows];
    let fl = E::of_f64(f as f64);
    for r in 0..rows {
        let xs = &x[r * f..(r + 1) * f];
        let mu: E = xs.iter().copied().sum::<E>() / fl;
        let var: E = xs.iter().map(|&v| (v - mu) * (v - mu)).sum::<E>() / fl;
        let is = E::one() / (var + eps).sqrt();
        mean[r] = mu;
        inv_std[r] = is;
        for (o, &v) in out[r * f..(r + 1) * f].iter_mut().zip(xs) {
            *o = (v - mu) * is;
        }
    }
    RowStats { mean, inv_std }
}

/// Core backward for row normalization. `g_scaled` must already be
/// `grad_out * gamma` per element; returns dx in place of `g_scaled`.
fn backward_rows<E: Element>(
    x: &[E],
    stats: &RowStats<E>,
    rows: usize,
    f: usize,
    g_scaled: &mut [E],
) {
    let fl = E::of_f64(f as f64);
    for r in 0..rows {
        let xs = &x[r * f..(r + 1) * f];
        let (mu, is) = (stats.mean[r], stats.inv_std[r]);
        let gs = &mut g_scaled[r * f..(r + 1) * f];
        let mut m1 = E::zero();
        let mut m2 = E::zero();
        for (gv, &v) in gs.iter().zip(xs) {
            let xhat = (v - mu) * is;
            m1 += *gv;
            m2 += *gv * xhat;
        }
        m1 = m1 / fl;
        m2 = m2 / fl;
        for (gv, &v) in gs.iter_mut().zip(xs) {
            let xhat = (v - mu) * is;
            *gv = is * (*gv - m1 - xhat * m2);
        }
    }
}

/// Layer normalization over the last axis: `x [.., F]`, `gamma/beta [F]`.
pub fn layer_norm<E: Element>(x: &Var<E>, gamma: &Var<E>, beta: &Var<E>, eps: f64) -> Var<E> {
    let f = *x.shape().last().expect("layer_norm on 0-d tensor");
    assert_eq!(gamma.shape(), [f]);
    assert_eq!(beta.shape(), [f]);
    let rows = x.numel() / f;
    let eps = E::of_f64(eps);

    let mut out = ArrayD::<E>::zeros(IxDyn(x.shape()));
    let stats = {
        let xs = x.data.as_slice_memory_order().unwrap();
        let os = out.as_slice_memory_order_mut().unwrap();
        let stats = forward_rows(xs, rows, f, eps, os);
        let gam = gamma.data.as_slice_memory_order().unwrap();
        let bet = beta.data.as_slice_memory_order().unwrap();
        for r in 0..rows {
            for (i, o) in os[r * f..(r + 1) * f].iter_mut().enumerate() {
                *o = *o * gam[i] + bet[i];
            }
        }
        stats
    };

    let Some(tape) = common_tape(&[x, gamma, beta]) else {
        return Var::constant(out);
    };
    let (px, pg, pb) = (x.node, gamma.node, beta.node);
    let xd = x.data.clone();
    let gd = gamma.data.clone();
    let id = tape.push(Box::new(move |g, sink| {
        let gs = g.as_slice_memory_order().unwrap();
        let xs = xd.as_slice_memory_order().unwrap();
        let gam = gd.as_slice_memory_order().unwrap();
        if pg.is_some() || pb.is_some() {
            let mut dgam = vec![E::zero(); f];
            let mut dbet = vec![E::zero(); f];
            for r in 0..rows {
                let (mu, is) = (stats.mean[r], stats.inv_std[r]);
                for i in 0..f {
                    let gv = gs[r * f + i];
                    let xhat = (xs[r * f + i] - mu) * is;
                    dgam[i] += gv * xhat;
                    dbet[i] += gv;
                }
            }
            if let Some(p) = pg {
                sink(p, ArrayD::from_shape_vec(IxDyn(&[f]), dgam).unwrap());
            }
            if let Some(p) = pb {
                sink(p, ArrayD::from_shape_vec(IxDyn(&[f]), dbet).unwrap());
            }
        }
        if let Some(p) = px {
            let mut dx = vec![E::zero(); rows * f];
            for r in 0..rows {
                for i in 0..f {
                    dx[r * f + i] = gs[r * f + i] * gam[i];
                }
            }
            backward_rows(xs, &stats, rows, f, &mut dx);
            sink(p, ArrayD::from_shape_vec(IxDyn(g.shape()), dx).unwrap());
        }
    }));
    Var::tracked(out, id, tape)
}

/// Instance normalization: `x [B, C, ..spatial]`, normalized per (sample,
/// channel) over the spatial extent; `gamma/beta [C]`.
pub fn instance_norm<E: Element>(x: &Var<E>, gamma: &Var<E>, beta: &Var<E>, eps: f64) -> Var<E> {
    let sh = x.shape().to_vec();
    assert!(sh.len() >= 3, "instance_norm expects [B, C, spatial..]");
    let (b, c) = (sh[0], sh[1]);
    let f: usize = sh[2..].iter().product();
    assert_eq!(gamma.shape(), [c]);
    assert_eq!(beta.shape(), [c]);
    let rows = b * c;
    let eps = E::of_f64(eps);

    let mut out = ArrayD::<E>::zeros(IxDyn(&sh));
    let stats = {
        let xs = x.data.as_slice_memory_order().unwrap();
        let os = out.as_slice_memory_order_mut().unwrap();
        let stats = forward_rows(xs, rows, f, eps, os);
        let gam = gamma.data.as_slice_memory_order().unwrap();
        let bet = beta.data.as_slice_memory_order().unwrap();
        for r in 0..rows {
            let ch = r % c;
            for o in os[r * f..(r + 1) * f].iter_mut() {
                *o = *o * gam[ch] + bet[ch];
            }
        }
        stats
    };

    let Some(tape) = common_tape(&[x, gamma, beta]) else {
        return Var::constant(out);
    };
    let (px, pg, pb) = (x.node, gamma.node, beta.node);
    let xd = x.data.clone();
    let gd = gamma.data.clone();
    let id = tape.push(Box::new(move |g, sink| {
        let gs = g.as_slice_memory_order().unwrap();
        let xs = xd.as_slice_memory_order().unwrap();
        let gam = gd.as_slice_memory_order().unwrap();
        if pg.is_some() || pb.is_some() {
            let mut dgam = vec![E::zero(); c];
            let mut dbet = vec![E::zero(); c];
            for r in 0..rows {
                let ch = r % c;
                let (mu, is) = (stats.mean[r], stats.inv_std[r]);
                for i in 0..f {
                    let gv = gs[r * f + i];
                    let xhat = (xs[r * f + i] - mu) * is;
                    dgam[ch] += gv * xhat;
                    dbet[ch] += gv;
                }
            }
            if let Some(p) = pg {
                sink(p, ArrayD::from_shape_vec(IxDyn(&[c]), dgam).unwrap());
            }
            if let Some(p) = pb {
                sink(p, ArrayD::from_shape_vec(IxDyn(&[c]), dbet).unwrap());
            }
        }
        if let Some(p) = px {
            let mut dx = vec![E::zero(); rows * f];
            for r in 0..rows {
                let ch = r % c;
                for i in 0..f {
                    dx[r * f + i] = gs[r * f + i] * gam[ch];
                }
            }
            backward_rows(xs, &stats, rows, f, &mut dx);
            sink(p, ArrayD::from_shape_vec(IxDyn(g.shape()), dx).unwrap());
        }
    }));
    Var::tracked(out, id, tape)
}
