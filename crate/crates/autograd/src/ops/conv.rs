//! 3D convolution and transposed convolution, lowered to GEMM.
//!
//! Forward: `Y[oc, p] = W[oc, ick] * Col[ick, p]` over depth-chunked im2col
//! buffers, writing straight into the strided output block. Backward
//! recomputes the im2col buffer per chunk instead of keeping it alive.

use ndarray::{ArrayD, IxDyn};

use crate::element::Element;
use crate::tape::{common_tape, Var};

/// Target im2col buffer size in elements (~96 MB for f32).
const COL_BUDGET: usize = 24_000_000;

#[derive(Clone, Copy)]
struct ConvGeom {
    ic: usize,
    d: usize,
    h: usize,
    w: usize,
    kd: usize,
    kh: usize,
    kw: usize,
    sd: usize,
    sh: usize,
    sw: usize,
    pd: usize,
    ph: usize,
    pw: usize,
    od: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.ic * self.kd * self.kh * self.kw
    }

    fn out_size(kernel: usize, stride: usize, pad: usize, input: usize) -> usize {
        assert!(
            input + 2 * pad >= kernel,
            "conv kernel {kernel} larger than padded input {input}+2*{pad}"
        );
        (input + 2 * pad - kernel) / stride + 1
    }
}

/// Fills `col[row, p]` for output depth positions `[od0, od0 + n_od)`.
fn im2col_chunk<E: Element>(x: &[E], g: &ConvGeom, od0: usize, n_od: usize, col: &mut [E]) {
    let p_total = n_od * g.oh * g.ow;
    let plane = g.oh * g.ow;
    for ic in 0..g.ic {
        for z in 0..g.kd {
            for y in 0..g.kh {
                for xk in 0..g.kw {
                    let row = ((ic * g.kd + z) * g.kh + y) * g.kw + xk;
                    let row_buf = &mut col[row * p_total..(row + 1) * p_total];
                    for odl in 0..n_od {
                        let id = ((od0 + odl) * g.sd + z) as isize - g.pd as isize;
                        let seg = &mut row_buf[odl * plane..(odl + 1) * plane];
                        if id < 0 || id >= g.d as isize {
                            seg.fill(E::zero());
                            continue;
                        }
                        for ohp in 0..g.oh {
                            let ih = (ohp * g.sh + y) as isize - g.ph as isize;
                            let dst = &mut seg[ohp * g.ow..(ohp + 1) * g.ow];
                            if ih < 0 || ih >= g.h as isize {
                                dst.fill(E::zero());
                                continue;
                            }
                            let src_base = ((ic * g.d + id as usize) * g.h + ih as usize) * g.w;
                            let iw0 = xk as isize - g.pw as isize;
                            if g.sw == 1 {
                                let lo = (-iw0).max(0) as usize;
                                let hi = ((g.w as isize - iw0).max(0) as usize).min(g.ow);
                                dst[..lo.min(g.ow)].fill(E::zero());
                                if hi > lo {
                                    let s0 = (iw0 + lo as isize) as usize;
                                    dst[lo..hi]
                                        .copy_from_slice(&x[src_base + s0..src_base + s0 + hi - lo]);
                                }
                                if hi < g.ow {
                                    dst[hi..].fill(E::zero());
                                }
                            } else {
                                for (owp, d) in dst.iter_mut().enumerate() {
                                    let iw = (owp * g.sw) as isize + iw0;
                                    *d = if iw >= 0 && iw < g.w as isize {
                                        x[src_base + iw as usize]
                                    } else {
                                        E::zero()
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `col` (same layout as [`im2col_chunk`]) back into `dx`.
fn col2im_add_chunk<E: Element>(dx: &mut [E], g: &ConvGeom, od0: usize, n_od: usize, col: &[E]) {
    let p_total = n_od * g.oh * g.ow;
    let plane = g.oh * g.ow;
    for ic in 0..g.ic {
        for z in 0..g.kd {
            for y in 0..g.kh {
                for xk in 0..g.kw {
                    let row = ((ic * g.kd + z) * g.kh + y) * g.kw + xk;
                    let row_buf = &col[row * p_total..(row + 1) * p_total];
                    for odl in 0..n_od {
                        let id = ((od0 + odl) * g.sd + z) as isize - g.pd as isize;
                        if id < 0 || id >= g.d as isize {
                            continue;
                        }
                        let seg = &row_buf[odl * plane..(odl + 1) * plane];
                        for ohp in 0..g.oh {
                            let ih = (ohp * g.sh + y) as isize - g.ph as isize;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let src = &seg[ohp * g.ow..(ohp + 1) * g.ow];
                            let dst_base = ((ic * g.d + id as usize) * g.h + ih as usize) * g.w;
                            let iw0 = xk as isize - g.pw as isize;
                            for (owp, &v) in src.iter().enumerate() {
                                let iw = (owp * g.sw) as isize + iw0;
                                if iw >= 0 && iw < g.w as isize {
                                    dx[dst_base + iw as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn depth_chunk(rows: usize, plane: usize, od: usize) -> usize {
    (COL_BUDGET / (rows * plane).max(1)).clamp(1, od)
}

/// `x [B, IC, D, H, W]`, `w [OC, IC, KD, KH, KW]`, optional bias `[OC]`.
pub fn conv3d<E: Element>(
    x: &Var<E>,
    w: &Var<E>,
    b: Option<&Var<E>>,
    stride: [usize; 3],
    padding: [usize; 3],
) -> Var<E> {
    let xs = x.shape().to_vec();
    let ws = w.shape().to_vec();
    assert_eq!(xs.len(), 5, "conv3d input must be [B,IC,D,H,W], got {xs:?}");
    assert_eq!(ws.len(), 5, "conv3d weight must be [OC,IC,KD,KH,KW], got {ws:?}");
    assert_eq!(xs[1], ws[1], "conv3d channel mismatch {xs:?} vs {ws:?}");
    let batch = xs[0];
    let oc = ws[0];
    let g = ConvGeom {
        ic: xs[1],
        d: xs[2],
        h: xs[3],
        w: xs[4],
        kd: ws[2],
        kh: ws[3],
        kw: ws[4],
        sd: stride[0],
        sh: stride[1],
        sw: stride[2],
        pd: padding[0],
        ph: padding[1],
        pw: padding[2],
        od: ConvGeom::out_size(ws[2], stride[0], padding[0], xs[2]),
        oh: ConvGeom::out_size(ws[3], stride[1], padding[1], xs[3]),
        ow: ConvGeom::out_size(ws[4], stride[2], padding[2], xs[4]),
    };
    if let Some(bias) = b {
        assert_eq!(bias.shape(), [oc]);
    }

    let rows = g.rows();
    let plane = g.oh * g.ow;
    let out_spatial = g.od * plane;
    let in_spatial = g.d * g.h * g.w;
    let chunk = depth_chunk(rows, plane, g.od);

    let mut out = ArrayD::<E>::zeros(IxDyn(&[batch, oc, g.od, g.oh, g.ow]));
    {
        let xsl = x.data.as_slice_memory_order().unwrap();
        let wsl = w.data.as_slice_memory_order().unwrap();
        let osl = out.as_slice_memory_order_mut().unwrap();
        let mut col = vec![E::zero(); rows * chunk * plane];
        for bi in 0..batch {
            let xb = &xsl[bi * g.ic * in_spatial..(bi + 1) * g.ic * in_spatial];
            let mut od0 = 0;
            while od0 < g.od {
                let n_od = chunk.min(g.od - od0);
                let p = n_od * plane;
                im2col_chunk(xb, &g, od0, n_od, &mut col[..rows * p]);
                unsafe {
                    E::gemm(
                        false,
                        false,
                        oc,
                        p,
                        rows,
                        E::one(),
                        wsl.as_ptr(),
                        rows,
                        col.as_ptr(),
                        p,
                        E::zero(),
                        osl[bi * oc * out_spatial + od0 * plane..].as_mut_ptr(),
                        out_spatial,
                    );
                }
                od0 += n_od;
            }
        }
        if let Some(bias) = b {
            let bsl = bias.data.as_slice_memory_order().unwrap();
            for bi in 0..batch {
                for (ci, &bv) in bsl.iter().enumerate() {
                    let base = (bi * oc + ci) * out_spatial;
                    for v in &mut osl[base..base + out_spatial] {
                        *v += bv;
                    }
                }
            }
        }
    }

    let mut operands: Vec<&Var<E>> = vec![x, w];
    if let Some(bias) = b {
        operands.push(bias);
    }
    let Some(tape) = common_tape(&operands) else {
        return Var::constant(out);
    };
    let (px, pw, pb) = (x.node, w.node, b.and_then(|v| v.node));
    let xd = x.data.clone();
    let wd = w.data.clone();
    let w_dim = IxDyn(&ws);
    let x_dim = IxDyn(&xs);
    let id = tape.push(Box::new(move |gout, sink| {
        let gsl = gout.as_slice_memory_order().unwrap();
        let xsl = xd.as_slice_memory_order().unwrap();
        let wsl = wd.as_slice_memory_order().unwrap();
        let mut dw = if pw.is_some() {
            vec![E::zero(); oc * rows]
        } else {
            Vec::new()
        };
        let mut dx = if px.is_some() {
            vec![E::zero(); batch * g.ic * in_spatial]
        } else {
            Vec::new()
        };
        let mut col = vec![E::zero(); rows * chunk * plane];
        for bi in 0..batch {
            let xb = &xsl[bi * g.ic * in_spatial..(bi + 1) * g.ic * in_spatial];
            let mut od0 = 0;
            while od0 < g.od {
                let n_od = chunk.min(g.od - od0);
                let p = n_od * plane;
                let g_ptr = gsl[bi * oc * out_spatial + od0 * plane..].as_ptr();
                if pw.is_some() {
                    im2col_chunk(xb, &g, od0, n_od, &mut col[..rows * p]);
                    unsafe {
                        E::gemm(
                            false,
                            true,
                            oc,
                            rows,
                            p,
                            E::one(),
                            g_ptr,
                            out_spatial,
                            col.as_ptr(),
                            p,
                            E::one(),
                            dw.as_mut_ptr(),
                            rows,
                        );
                    }
                }
                if px.is_some() {
                    unsafe {
                        E::gemm(
                            true,
                            false,
                            rows,
                            p,
                            oc,
                            E::one(),
                            wsl.as_ptr(),
                            rows,
                            g_ptr,
                            out_spatial,
                            E::zero(),
                            col.as_mut_ptr(),
                            p,
                        );
                    }
                    let dxb = &mut dx[bi * g.ic * in_spatial..(bi + 1) * g.ic * in_spatial];
                    col2im_add_chunk(dxb, &g, od0, n_od, &col[..rows * p]);
                }
                od0 += n_od;
            }
        }
        if let Some(pid) = pw {
            sink(pid, ArrayD::from_shape_vec(w_dim.clone(), dw).unwrap());
        }
        if let Some(pid) = px {
            sink(pid, ArrayD::from_shape_vec(x_dim.clone(), dx).unwrap());
        }
        if let Some(pid) = pb {
            let mut db = vec![E::zero(); oc];
            for bi in 0..batch {
                for (ci, acc) in db.iter_mut().enumerate() {
                    let base = (bi * oc + ci) * out_spatial;
                    for &gv in &gsl[base..base + out_spatial] {
                        *acc += gv;
                    }
                }
            }
            sink(pid, ArrayD::from_shape_vec(IxDyn(&[oc]), db).unwrap());
        }
    }));
    Var::tracked(out, id, tape)
}

/// Transposed conv with `kernel == stride` (non-overlapping upsampling).
/// `x [B, IC, D, H, W]`, `w [IC, OC, KD, KH, KW]` -> `[B, OC, D*KD, H*KH, W*KW]`.
pub fn conv_transpose3d<E: Element>(
    x: &Var<E>,
    w: &Var<E>,
    b: Option<&Var<E>>,
    stride: [usize; 3],
) -> Var<E> {
    let xs = x.shape().to_vec();
    let ws = w.shape().to_vec();
    assert_eq!(xs.len(), 5);
    assert_eq!(ws.len(), 5);
    assert_eq!(xs[1], ws[0], "conv_transpose3d channel mismatch");
    assert_eq!(
        [ws[2], ws[3], ws[4]],
        stride,
        "conv_transpose3d requires kernel == stride"
    );
    let (batch, ic) = (xs[0], xs[1]);
    let (d, h, wi) = (xs[2], xs[3], xs[4]);
    let oc = ws[1];
    let (kd, kh, kw) = (ws[2], ws[3], ws[4]);
    let (od, oh, ow) = (d * kd, h * kh, wi * kw);
    let ock = oc * kd * kh * kw;
    let in_spatial = d * h * wi;
    let out_spatial = od * oh * ow;

    // Repacked weights: wr[((oc*kd+z)*kh+y)*kw+xk, ic]
    let repack = move |wsl: &[E]| {
        let mut wr = vec![E::zero(); ock * ic];
        for ici in 0..ic {
            for oci in 0..oc {
                for z in 0..kd {
                    for y in 0..kh {
                        for xk in 0..kw {
                            let src = (((ici * oc + oci) * kd + z) * kh + y) * kw + xk;
                            let row = ((oci * kd + z) * kh + y) * kw + xk;
                            wr[row * ic + ici] = wsl[src];
                        }
                    }
                }
            }
        }
        wr
    };

    let chunk = depth_chunk(ock, h * wi, d);
    let mut out = ArrayD::<E>::zeros(IxDyn(&[batch, oc, od, oh, ow]));
    {
        let xsl = x.data.as_slice_memory_order().unwrap();
        let wr = repack(w.data.as_slice_memory_order().unwrap());
        let osl = out.as_slice_memory_order_mut().unwrap();
        let mut buf = vec![E::zero(); ock * chunk * h * wi];
        for bi in 0..batch {
            let mut d0 = 0;
            while d0 < d {
                let n_d = chunk.min(d - d0);
                let p = n_d * h * wi;
                unsafe {
                    E::gemm(
                        false,
                        false,
                        ock,
                        p,
                        ic,
                        E::one(),
                        wr.as_ptr(),
                        ic,
                        xsl[(bi * ic) * in_spatial + d0 * h * wi..].as_ptr(),
                        in_spatial,
                        E::zero(),
                        buf.as_mut_ptr(),
                        p,
                    );
                }
                // scatter buf[ock, p] into the output block
                for oci in 0..oc {
                    for z in 0..kd {
                        for y in 0..kh {
                            for xk in 0..kw {
                                let row = ((oci * kd + z) * kh + y) * kw + xk;
                                let src_row = &buf[row * p..(row + 1) * p];
                                for dl in 0..n_d {
                                    for hh in 0..h {
                                        let src = &src_row[(dl * h + hh) * wi..(dl * h + hh + 1) * wi];
                                        let dst_base = ((bi * oc + oci) * od + (d0 + dl) * kd + z)
                                            * oh
                                            * ow
                                            + (hh * kh + y) * ow
                                            + xk;
                                        if kw == 1 {
                                            osl[dst_base..dst_base + wi].copy_from_slice(src);
                                        } else {
                                            for (wwi, &v) in src.iter().enumerate() {
                                                osl[dst_base + wwi * kw] = v;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                d0 += n_d;
            }
        }
        if let Some(bias) = b {
            let bsl = bias.data.as_slice_memory_order().unwrap();
            for bi in 0..batch {
                for (ci, &bv) in bsl.iter().enumerate() {
                    let base = (bi * oc + ci) * out_spatial;
                    for v in &mut osl[base..base + out_spatial] {
                        *v += bv;
                    }
                }
            }
        }
    }

    let mut operands: Vec<&Var<E>> = vec![x, w];
    if let Some(bias) = b {
        operands.push(bias);
    }
    let Some(tape) = common_tape(&operands) else {
        return Var::constant(out);
    };
    let (px, pw, pb) = (x.node, w.node, b.and_then(|v| v.node));
    let xd = x.data.clone();
    let wd = w.data.clone();
    let w_dim = IxDyn(&ws);
    let x_dim = IxDyn(&xs);
    let id = tape.push(Box::new(move |gout, sink| {
        let gsl = gout.as_slice_memory_order().unwrap();
        let xsl = xd.as_slice_memory_order().unwrap();
        let wr = repack(wd.as_slice_memory_order().unwrap());
        let mut dwr = if pw.is_some() {
            vec![E::zero(); ock * ic]
        } else {
            Vec::new()
        };
        let mut dx = if px.is_some() {
            vec![E::zero(); batch * ic * in_spatial]
        } else {
            Vec::new()
        };
        let mut buf = vec![E::zero(); ock * chunk * h * wi];
        for bi in 0..batch {
            let mut d0 = 0;
            while d0 < d {
                let n_d = chunk.min(d - d0);
                let p = n_d * h * wi;
                // gather dY' from gout (inverse of the forward scatter)
                for oci in 0..oc {
                    for z in 0..kd {
                        for y in 0..kh {
                            for xk in 0..kw {
                                let row = ((oci * kd + z) * kh + y) * kw + xk;
                                let dst_row = &mut buf[row * p..(row + 1) * p];
                                for dl in 0..n_d {
                                    for hh in 0..h {
                                        let src_base = ((bi * oc + oci) * od + (d0 + dl) * kd + z)
                                            * oh
                                            * ow
                                            + (hh * kh + y) * ow
                                            + xk;
                                        let dst =
                                            &mut dst_row[(dl * h + hh) * wi..(dl * h + hh + 1) * wi];
                                        if kw == 1 {
                                            dst.copy_from_slice(&gsl[src_base..src_base + wi]);
                                        } else {
                                            for (wwi, v) in dst.iter_mut().enumerate() {
                                                *v = gsl[src_base + wwi * kw];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if px.is_some() {
                    unsafe {
                        E::gemm(
                            true,
                            false,
                            ic,
                            p,
                            ock,
                            E::one(),
                            wr.as_ptr(),
                            ic,
                            buf.as_ptr(),
                            p,
                            E::zero(),
                            dx[(bi * ic) * in_spatial + d0 * h * wi..].as_mut_ptr(),
                            in_spatial,
                        );
                    }
                }
                if pw.is_some() {
                    unsafe {
                        E::gemm(
                            false,
                            true,
                            ock,
                            ic,
                            p,
                            E::one(),
                            buf.as_ptr(),
                            p,
                            xsl[(bi * ic) * in_spatial + d0 * h * wi..].as_ptr(),
                            in_spatial,
                            E::one(),
                            dwr.as_mut_ptr(),
                            ic,
                        );
                    }
                }
                d0 += n_d;
            }
        }
        if let Some(pid) = pw {
            // un-repack dwr back into [IC, OC, KD, KH, KW]
            let mut dw = vec![E::zero(); ic * oc * kd * kh * kw];
            for ici in 0..ic {
                for oci in 0..oc {
                    for z in 0..kd {
                        for y in 0..kh {
                            for xk in 0..kw {
                                let dst = (((ici * oc + oci) * kd + z) * kh + y) * kw + xk;
                                let row = ((oci * kd + z) * kh + y) * kw + xk;
                                dw[dst] = dwr[row * ic + ici];
                            }
                        }
                    }
                }
            }
            sink(pid, ArrayD::from_shape_vec(w_dim.clone(), dw).unwrap());
        }
        if let Some(pid) = px {
            sink(pid, ArrayD::from_shape_vec(x_dim.clone(), dx).unwrap());
        }
        if let Some(pid) = pb {
            let mut db = vec![E::zero(); oc];
            for bi in 0..batch {
                for (ci, acc) in db.iter_mut().enumerate() {
                    let base = (bi * oc + ci) * out_spatial;
                    for &gv in &gsl[base..base + out_spatial] {
                        *acc += gv;
                    }
                }
            }
            sink(pid, ArrayD::from_shape_vec(IxDyn(&[oc]), db).unwrap());
        }
    }));
    Var::tracked(out, id, tape)
}
