//! Thin FFI layer over the system CBLAS (OpenBLAS).

#![allow(clippy::too_many_arguments)]

const ROW_MAJOR: i32 = 101;
const NO_TRANS: i32 = 111;
const TRANS: i32 = 112;

extern "C" {
    fn cblas_sgemm(
        order: i32,
        trans_a: i32,
        trans_b: i32,
        m: i32,
        n: i32,
        k: i32,
        alpha: f32,
        a: *const f32,
        lda: i32,
        b: *const f32,
        ldb: i32,
        beta: f32,
        c: *mut f32,
        ldc: i32,
    );
    fn cblas_dgemm(
        order: i32,
        trans_a: i32,
        trans_b: i32,
        m: i32,
        n: i32,
        k: i32,
        alpha: f64,
        a: *const f64,
        lda: i32,
        b: *const f64,
        ldb: i32,
        beta: f64,
        c: *mut f64,
        ldc: i32,
    );
    fn openblas_set_num_threads(n: i32);
}

/// Caps the number of OpenBLAS worker threads (1 forces serial kernels).
pub fn set_blas_threads(n: usize) {
    unsafe { openblas_set_num_threads(n.max(1) as i32) }
}

fn flag(t: bool) -> i32 {
    if t {
        TRANS
    } else {
        NO_TRANS
    }
}

/// Row-major GEMM: `C = alpha * op(A) * op(B) + beta * C`.
///
/// `op(A)` is `m x k`, `op(B)` is `k x n`, `C` is `m x n` with leading
/// dimension `ldc`. Raw pointers so callers can address strided sub-blocks
/// of larger buffers; the caller guarantees the addressed regions are valid.
pub unsafe fn sgemm(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: f32,
    a: *const f32,
    lda: usize,
    b: *const f32,
    ldb: usize,
    beta: f32,
    c: *mut f32,
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    cblas_sgemm(
        ROW_MAJOR,
        flag(trans_a),
        flag(trans_b),
        m as i32,
        n as i32,
        k as i32,
        alpha,
        a,
        lda as i32,
        b,
        ldb as i32,
        beta,
        c,
        ldc as i32,
    );
}

/// `f64` counterpart of [`sgemm`].
pub unsafe fn dgemm(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    a: *const f64,
    lda: usize,
    b: *const f64,
    ldb: usize,
    beta: f64,
    c: *mut f64,
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    cblas_dgemm(
        ROW_MAJOR,
        flag(trans_a),
        flag(trans_b),
        m as i32,
        n as i32,
        k as i32,
        alpha,
        a,
        lda as i32,
        b,
        ldb as i32,
        beta,
        c,
        ldc as i32,
    );
}
