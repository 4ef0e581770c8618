//! Gradient checks for every differentiable op, plus forward-value sanity.

use ndarray::{ArrayD, IxDyn};
use trabs_autograd::fdcheck::{fd_check, fd_check_data};
use trabs_autograd::ops;
use trabs_autograd::{Tape, Var};

const TOL: f64 = 1e-6;
const EPS: f64 = 1e-5;

#[test]
fn grad_add_sub_mul_scale() {
    fd_check(&[&[2, 3], &[2, 3]], 1, EPS, |_t, v| {
        v[0].add(&v[1]).mul(&v[0]).sub(&v[1].scale(0.5)).mean_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_activations() {
    fd_check(&[&[4, 5]], 2, EPS, |_t, v| {
        v[0].gelu().leaky_relu(0.01).sum_all()
    })
    .assert_close(1e-5);
}

#[test]
fn grad_reshape_permute_slice_pad() {
    fd_check(&[&[2, 3, 4]], 3, EPS, |_t, v| {
        let x = v[0].reshape(&[6, 4]).permute(&[1, 0]); // [4, 6]
        let x = x.slice(&[1..3, 2..6]); // [2, 4]
        let x = x.pad(&[(1, 0), (0, 2)]); // [3, 6]
        x.mul(&x).sum_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_flip_roll_concat() {
    fd_check(&[&[2, 4, 3], &[2, 2, 3]], 4, EPS, |_t, v| {
        let a = v[0].flip(&[1, 2]).roll(&[1, -2], &[1, 0]);
        let c = ops::concat(&[&a, &v[1]], 1); // [2, 6, 3]
        c.mul(&c).mean_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_linear_and_batched_matmul() {
    fd_check(&[&[3, 4], &[4, 5], &[5]], 5, EPS, |_t, v| {
        ops::linear(&v[0], &v[1], Some(&v[2])).mean_all()
    })
    .assert_close(TOL);

    fd_check(&[&[2, 3, 4], &[2, 4, 5]], 6, EPS, |_t, v| {
        ops::batched_matmul(&v[0], &v[1], false).sum_all()
    })
    .assert_close(TOL);

    fd_check(&[&[2, 3, 4], &[2, 5, 4]], 7, EPS, |_t, v| {
        ops::batched_matmul(&v[0], &v[1], true).sum_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_softmax() {
    fd_check(&[&[3, 5]], 8, EPS, |_t, v| {
        let y = v[0].softmax(1);
        y.mul(&y).sum_all()
    })
    .assert_close(TOL);
    // softmax along a non-last axis
    fd_check(&[&[3, 4, 2]], 9, EPS, |_t, v| {
        let y = v[0].softmax(1);
        y.mul(&y).mean_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_layer_norm() {
    fd_check(&[&[4, 6], &[6], &[6]], 10, EPS, |_t, v| {
        ops::layer_norm(&v[0], &v[1], &v[2], 1e-5)
            .gelu()
            .sum_all()
    })
    .assert_close(1e-5);
}

#[test]
fn grad_instance_norm() {
    fd_check(&[&[2, 3, 2, 2, 2], &[3], &[3]], 11, EPS, |_t, v| {
        let y = ops::instance_norm(&v[0], &v[1], &v[2], 1e-5);
        y.mul(&y).mean_all()
    })
    .assert_close(1e-5);
}

#[test]
fn grad_conv3d() {
    // stride 1, padding 1, 3x3x3
    fd_check(
        &[&[1, 2, 3, 4, 4], &[3, 2, 3, 3, 3], &[3]],
        12,
        EPS,
        |_t, v| {
            ops::conv3d(&v[0], &v[1], Some(&v[2]), [1, 1, 1], [1, 1, 1]).mean_all()
        },
    )
    .assert_close(TOL);
    // non-isotropic 1x3x3 kernel with 1x2x2 stride, padding (0,1,1)
    fd_check(
        &[&[2, 2, 2, 4, 4], &[4, 2, 1, 3, 3]],
        13,
        EPS,
        |_t, v| {
            ops::conv3d(&v[0], &v[1], None, [1, 2, 2], [0, 1, 1]).sum_all()
        },
    )
    .assert_close(TOL);
}

#[test]
fn grad_conv_transpose3d() {
    fd_check(
        &[&[1, 3, 2, 2, 2], &[3, 2, 2, 2, 2], &[2]],
        14,
        EPS,
        |_t, v| {
            ops::conv_transpose3d(&v[0], &v[1], Some(&v[2]), [2, 2, 2]).mean_all()
        },
    )
    .assert_close(TOL);
    // non-isotropic 1x2x2 upsampling
    fd_check(&[&[2, 2, 3, 2, 2], &[2, 3, 1, 2, 2]], 15, EPS, |_t, v| {
        ops::conv_transpose3d(&v[0], &v[1], None, [1, 2, 2]).sum_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_max_pool3d() {
    fd_check(&[&[1, 2, 4, 4, 4]], 16, EPS, |_t, v| {
        ops::max_pool3d(&v[0], [2, 2, 2], [2, 2, 2]).sum_all()
    })
    .assert_close(TOL);
    fd_check(&[&[1, 1, 2, 4, 6]], 17, EPS, |_t, v| {
        ops::max_pool3d(&v[0], [1, 2, 2], [1, 2, 2]).mean_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_index_select_and_broadcast_add() {
    // repeated indices must scatter-accumulate into the table gradient
    fd_check(&[&[5, 3], &[4, 2, 3]], 18, EPS, |_t, v| {
        let rows = ops::index_select0(&v[0], &[4, 0, 0, 2, 1, 3]); // [6, 3]
        let bias = rows.slice(&[0..2, 0..3]); // [2, 3]
        v[1].add_broadcast0(&bias).sum_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_linear_only() {
    fd_check(&[&[3, 4], &[4, 5], &[5]], 5, EPS, |_t, v| {
        ops::linear(&v[0], &v[1], Some(&v[2])).mean_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_batched_matmul_nt() {
    fd_check(&[&[2, 3, 4], &[2, 4, 5]], 6, EPS, |_t, v| {
        ops::batched_matmul(&v[0], &v[1], false).sum_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_batched_matmul_tt() {
    fd_check(&[&[2, 3, 4], &[2, 5, 4]], 7, EPS, |_t, v| {
        ops::batched_matmul(&v[0], &v[1], true).sum_all()
    })
    .assert_close(TOL);
}

#[test]
fn grad_dice_ce_loss() {
    let target = ArrayD::from_shape_vec(
        IxDyn(&[2, 3, 3, 3]),
        (0..54).map(|i| (i % 2) as u8).collect(),
    )
    .unwrap();
    fd_check(&[&[2, 2, 3, 3, 3]], 19, 1e-6, |_t, v| {
        ops::softmax_dice_ce(&v[0], &target, 1e-5, 1)
    })
    .assert_close(1e-5);
}

#[test]
fn constant_inputs_record_nothing() {
    let a = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 2]), 1.0));
    let b = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 2]), 2.0));
    let c = a.add(&b).mul(&a);
    assert!(!c.is_tracked());
    assert_eq!(c.value()[[0, 0]], 3.0);
}

#[test]
fn backward_through_shared_subexpression_accumulates() {
    // y = x*x + x  =>  dy/dx = 2x + 1
    let tape = Tape::<f64>::new();
    let x = tape.leaf(ArrayD::from_elem(IxDyn(&[1]), 3.0));
    let y = x.mul(&x).add(&x).sum_all();
    let grads = tape.backward(&y);
    let g = grads.get(&x).unwrap();
    assert!((g[[0]] - 7.0).abs() < 1e-12);
}

#[test]
fn loss_values_match_reference() {
    // Perfect prediction saturated logits: loss ~ 0
    let mut logits = ArrayD::zeros(IxDyn(&[1, 2, 2, 2, 2]));
    let mut target = ArrayD::zeros(IxDyn(&[1, 2, 2, 2]));
    for d in 0..2 {
        for h in 0..2 {
            for w in 0..2 {
                let fg = (d + h + w) % 2 == 1;
                target[[0, d, h, w]] = if fg { 1u8 } else { 0u8 };
                logits[[0, 0, d, h, w]] = if fg { -20.0 } else { 20.0 };
                logits[[0, 1, d, h, w]] = if fg { 20.0 } else { -20.0 };
            }
        }
    }
    let v = Var::<f64>::constant(logits);
    let loss = ops::softmax_dice_ce(&v, &target, 1e-5, 1);
    assert!(loss.scalar() < 0.01, "perfect prediction loss {}", loss.scalar());
}

#[test]
fn fd_harness_rejects_wrong_gradient() {
    // sanity: use a deliberately wrong "loss" surrogate built from a detached
    // value and confirm the harness reports a mismatch
    let data = vec![ArrayD::from_elem(IxDyn(&[2]), 0.7)];
    let report = fd_check_data(&data, EPS, |_t, v| {
        // gradient of sum(x) is 1 but we cut the graph with a constant copy
        let detached = Var::constant(v[0].to_array());
        detached.mul(&detached).sum_all().add(&v[0].sum_all())
    });
    // analytic grad = 1, fd grad = 2x + 1 = 2.4 -> mismatch
    assert!(report.worst > 0.1);
}
