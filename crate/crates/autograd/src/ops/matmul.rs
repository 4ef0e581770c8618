//! GEMM-backed linear layers and batched matrix products.

use ndarray::{ArrayD, IxDyn};

use crate::element::Element;
use crate::tape::{common_tape, Shared, Var};

fn contiguous<E: Element>(a: &Shared<E>) -> &[E] {
    a.as_slice_memory_order().expect("non-contiguous tensor")
}

/// `y = x @ w + b` over the last axis: `x [.., IN]`, `w [IN, OUT]`, `b [OUT]`.
pub fn linear<E: Element>(x: &Var<E>, w: &Var<E>, b: Option<&Var<E>>) -> Var<E> {
    let xs = x.shape();
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    assert_eq!(*xs.last().unwrap(), n_in, "linear: {:?} @ {:?}", xs, w.shape());
    let rows: usize = xs[..xs.len() - 1].iter().product();

    let mut out_shape: Vec<usize> = xs[..xs.len() - 1].to_vec();
    out_shape.push(n_out);
    let mut out = ArrayD::<E>::zeros(IxDyn(&out_shape));
    {
        let xsl = contiguous(&x.data);
        let wsl = contiguous(&w.data);
        let osl = out.as_slice_memory_order_mut().unwrap();
        unsafe {
            E::gemm(
                false,
                false,
                rows,
                n_out,
                n_in,
                E::one(),
                xsl.as_ptr(),
                n_in,
                wsl.as_ptr(),
                n_out,
                E::zero(),
                osl.as_mut_ptr(),
                n_out,
            );
        }
        if let Some(bias) = b {
            let bsl = contiguous(&bias.data);
            for r in 0..rows {
                let row = &mut osl[r * n_out..(r + 1) * n_out];
                for (o, &bv) in row.iter_mut().zip(bsl) {
                    *o += bv;
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
    let x_dim = IxDyn(xs);
    let id = tape.push(Box::new(move |g, sink| {
        let gsl = g.as_slice_memory_order().unwrap();
        if let Some(p) = px {
            let mut dx = ArrayD::<E>::zeros(x_dim.clone());
            unsafe {
                E::gemm(
                    false,
                    true,
                    rows,
                    n_in,
                    n_out,
                    E::one(),
                    gsl.as_ptr(),
                    n_out,
                    contiguous(&wd).as_ptr(),
                    n_out,
                    E::zero(),
                    dx.as_slice_memory_order_mut().unwrap().as_mut_ptr(),
                    n_in,
                );
            }
            sink(p, dx);
        }
        if let Some(p) = pw {
            let mut dw = ArrayD::<E>::zeros(IxDyn(&[n_in, n_out]));
            unsafe {
                E::gemm(
                    true,
                    false,
                    n_in,
                    n_out,
                    rows,
                    E::one(),
                    contiguous(&xd).as_ptr(),
                    n_in,
                    gsl.as_ptr(),
                    n_out,
                    E::zero(),
                    dw.as_slice_memory_order_mut().unwrap().as_mut_ptr(),
                    n_out,
                );
            }
            sink(p, dw);
        }
        if let Some(p) = pb {
            let mut db = vec![E::zero(); n_out];
            for r in 0..rows {
                for (acc, &gv) in db.iter_mut().zip(&gsl[r * n_out..(r + 1) * n_out]) {
                    *acc += gv;
                }
            }
            sink(p, ArrayD::from_shape_vec(IxDyn(&[n_out]), db).unwrap());
        }
    }));
    Var::tracked(out, id, tape)
}

/// Batched product `y[i] = a[i] @ op(b[i])` with `a [BT, M, K]` and
/// `b [BT, K, N]` (or `[BT, N, K]` when `transpose_b`).
pub fn batched_matmul<E: Element>(a: &Var<E>, b: &Var<E>, transpose_b: bool) -> Var<E> {
    let (asp, bsp) = (a.shape(), b.shape());
    assert_eq!(asp.len(), 3, "batched_matmul expects rank-3, got {asp:?}");
    assert_eq!(bsp.len(), 3, "batched_matmul expects rank-3, got {bsp:?}");
    assert_eq!(asp[0], bsp[0], "batch mismatch {asp:?} vs {bsp:?}");
    let (bt, m, k) = (asp[0], asp[1], asp[2]);
    let n = if transpose_b { bsp[1] } else { bsp[2] };
    let k_b = if transpose_b { bsp[2] } else { bsp[1] };
    assert_eq!(k, k_b, "inner dim mismatch {asp:?} vs {bsp:?}");

    let b_stride = bsp[1] * bsp[2];
    let mut out = ArrayD::<E>::zeros(IxDyn(&[bt, m, n]));
    {
        let asl = contiguous(&a.data);
        let bsl = contiguous(&b.data);
        let osl = out.as_slice_memory_order_mut().unwrap();
        for i in 0..bt {
            unsafe {
                E::gemm(
                    false,
                    transpose_b,
                    m,
                    n,
                    k,
                    E::one(),
                    asl[i * m * k..].as_ptr(),
                    k,
                    bsl[i * b_stride..].as_ptr(),
                    if transpose_b { k } else { n },
                    E::zero(),
                    osl[i * m * n..].as_mut_ptr(),
                    n,
                );
            }
        }
    }

    let Some(tape) = common_tape(&[a, b]) else {
        return Var::constant(out);
    };
    let (pa, pb) = (a.node, b.node);
    let ad = a.data.clone();
    let bd = b.data.clone();
    let b_dim = IxDyn(bsp);
    let id = tape.push(Box::new(move |g, sink| {
        let gsl = g.as_slice_memory_order().unwrap();
        let asl = contiguous(&ad);
        let bsl = contiguous(&bd);
        if let Some(p) = pa {
            let mut da = ArrayD::<E>::zeros(IxDyn(&[bt, m, k]));
            let dsl = da.as_slice_memory_order_mut().unwrap();
            for i in 0..bt {
                // !transpose_b: da = g @ b^T ; transpose_b: da = g @ b
                unsafe {
                    E::gemm(
                        false,
                        !transpose_b,
                        m,
                        k,
                        n,
                        E::one(),
                        gsl[i * m * n..].as_ptr(),
                        n,
                        bsl[i * b_stride..].as_ptr(),
                        if transpose_b { k } else { n },
                        E::zero(),
                        dsl[i * m * k..].as_mut_ptr(),
                        k,
                    );
                }
            }
            sink(p, da);
        }
        if let Some(p) = pb {
            let mut db = ArrayD::<E>::zeros(b_dim.clone());
            let dsl = db.as_slice_memory_order_mut().unwrap();
            for i in 0..bt {
                if transpose_b {
                    // b [BT, N, K]; db = g^T @ a
                    unsafe {
                        E::gemm(
                            true,
                            false,
                            n,
                            k,
                            m,
                            E::one(),
                            gsl[i * m * n..].as_ptr(),
                            n,
                            asl[i * m * k..].as_ptr(),
                            k,
                            E::zero(),
                            dsl[i * n * k..].as_mut_ptr(),
                            k,
                        );
                    }
                } else {
                    // b [BT, K, N]; db = a^T @ g
                    unsafe {
                        E::gemm(
                            true,
                            false,
                            k,
                            n,
                            m,
                            E::one(),
                            asl[i * m * k..].as_ptr(),
                            k,
                            gsl[i * m * n..].as_ptr(),
                            n,
                            E::zero(),
                            dsl[i * k * n..].as_mut_ptr(),
                            n,
                        );
                    }
                }
            }
            sink(p, db);
        }
    }));
    Var::tracked(out, id, tape)
}
