//! Central-finite-difference gradient verification harness.
//!
//! Runs an arbitrary graph-building closure twice per perturbed element and
//! compares against the tape's analytic gradients. Used by the op test suite
//! and re-exported for downstream gradient-integrity checks.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tape::{Tape, Var};

pub struct FdReport {
    /// Max over elements of `min(abs_err, rel_err)`: an element passes if it
    /// is close in either sense, so this is the worst violation.
    pub worst: f64,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Checks d(loss)/d(input_i) for every element of every input.
///
/// `build` must construct a scalar loss from the tracked leaves it is given.
/// Inputs are drawn from U(-1, 1) seeded by `seed`.
pub fn fd_check<F>(shapes: &[&[usize]], seed: u64, eps: f64, build: F) -> FdReport
where
    F: Fn(&Tape<f64>, &[Var<f64>]) -> Var<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(0xfd ^ seed);
    let data: Vec<ArrayD<f64>> = shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            ArrayD::from_shape_vec(IxDyn(s), v).unwrap()
        })
        .collect();
    fd_check_data(&data, eps, build)
}

/// Same as [`fd_check`] but with caller-provided input values.
pub fn fd_check_data<F>(data: &[ArrayD<f64>], eps: f64, build: F) -> FdReport
where
    F: Fn(&Tape<f64>, &[Var<f64>]) -> Var<f64>,
{
    let eval = |tensors: &[ArrayD<f64>]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var<f64>> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        build(&tape, &vars).scalar()
    };

    let tape = Tape::new();
    let vars: Vec<Var<f64>> = data.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&tape, &vars);
    let grads = tape.backward(&loss);

    let mut report = FdReport {
        worst: 0.0,
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        checked: 0,
    };
    for (vi, var) in vars.iter().enumerate() {
        let analytic = match grads.get(var) {
            Some(g) => g.clone(),
            None => ArrayD::zeros(IxDyn(var.shape())),
        };
        let n = data[vi].len();
        for flat in 0..n {
            let mut plus = data.to_vec();
            plus[vi].as_slice_memory_order_mut().unwrap()[flat] += eps;
            let mut minus = data.to_vec();
            minus[vi].as_slice_memory_order_mut().unwrap()[flat] -= eps;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let an = analytic.as_slice_memory_order().unwrap()[flat];
            let abs = (fd - an).abs();
            let rel = abs / fd.abs().max(an.abs()).max(1e-12);
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst = report.worst.max(abs.min(rel));
            report.checked += 1;
        }
    }
    report
}

impl FdReport {
    pub fn assert_close(&self, tol: f64) {
        assert!(
            self.worst < tol,
            "finite-difference mismatch: worst {:.3e} (abs {:.3e}, rel {:.3e}) over {} elements",
            self.worst,
            self.max_abs_err,
            self.max_rel_err,
            self.checked
        );
    }
}
