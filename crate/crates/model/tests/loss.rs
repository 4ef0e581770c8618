//! Loss contracts: limiting cases, the direct-formula oracle, multi-scale
//! composition, and the finite-difference gradient check in f64.

use ndarray::{Array4, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trabs_autograd::fdcheck::fd_check_data;
use trabs_autograd::{ops, Var};
use trabs_model::loss::{dice_ce_loss, downsample_target_nn, multiscale_loss, DICE_SMOOTH};
use trabs_model::ModelOutput;

fn saturated_logits(target: &Array4<u8>, magnitude: f32, correct: bool) -> Var<f32> {
    let s = target.shape();
    let mut logits = ArrayD::<f32>::zeros(IxDyn(&[s[0], 2, s[1], s[2], s[3]]));
    for ((b, d, h, w), &t) in target.indexed_iter() {
        let cls = if correct { t as usize } else { 1 - t as usize };
        logits[[b, cls, d, h, w]] = magnitude;
        logits[[b, 1 - cls, d, h, w]] = -magnitude;
    }
    Var::constant(logits)
}

fn checkerboard(shape: (usize, usize, usize, usize)) -> Array4<u8> {
    Array4::from_shape_fn(shape, |(_, d, h, w)| ((d + h + w) % 2) as u8)
}

#[test]
fn perfect_prediction_loss_near_zero() {
    let target = checkerboard((1, 4, 4, 4));
    let logits = saturated_logits(&target, 20.0, true);
    let loss = dice_ce_loss(&logits, &target).unwrap().scalar() as f64;
    assert!(loss < 0.01, "perfect-prediction loss {loss}");
}

#[test]
fn wrong_prediction_dice_term_saturates() {
    let target = checkerboard((1, 4, 4, 4));
    let logits = saturated_logits(&target, 20.0, false);
    let loss = dice_ce_loss(&logits, &target).unwrap().scalar() as f64;
    // CE contributes ln(1 + e^40) ~ 40 per voxel; the Dice term tends to 1
    let ce = (1.0 + (40.0f64).exp()).ln();
    assert!((loss - ce - 1.0).abs() < 0.01, "loss {loss} vs CE {ce} + 1");
}

/// Straightforward reimplementation of the two formulas in f64.
fn oracle_dice_ce(logits: &ArrayD<f32>, target: &Array4<u8>) -> f64 {
    let s = logits.shape();
    let (b, c) = (s[0], s[1]);
    let vox = s[2] * s[3] * s[4];
    let mut total = 0.0f64;
    for bi in 0..b {
        let mut ce = 0.0f64;
        let mut p_sum = 0.0;
        let mut pt_sum = 0.0;
        let mut t_sum = 0.0;
        for d in 0..s[2] {
            for h in 0..s[3] {
                for w in 0..s[4] {
                    let mut exps = vec![0.0f64; c];
                    let mut denom = 0.0;
                    for (ci, e) in exps.iter_mut().enumerate() {
                        *e = (logits[[bi, ci, d, h, w]] as f64).exp();
                        denom += *e;
                    }
                    let t = target[(bi, d, h, w)] as usize;
                    ce -= (exps[t] / denom).ln();
                    let pf = exps[1] / denom;
                    p_sum += pf;
                    if t == 1 {
                        t_sum += 1.0;
                        pt_sum += pf;
                    }
                }
            }
        }
        let dice = (2.0 * pt_sum + DICE_SMOOTH) / (p_sum + t_sum + DICE_SMOOTH);
        total += ce / vox as f64 + (1.0 - dice);
    }
    total / b as f64
}

#[test]
fn random_logits_match_direct_formula_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..10 {
        let target = Array4::from_shape_fn((2, 4, 4, 4), |_| u8::from(rng.gen_bool(0.5)));
        let n = 2 * 2 * 4 * 4 * 4;
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let logits = ArrayD::from_shape_vec(IxDyn(&[2, 2, 4, 4, 4]), data).unwrap();
        let loss = dice_ce_loss(&Var::constant(logits.clone()), &target)
            .unwrap()
            .scalar() as f64;
        let expect = oracle_dice_ce(&logits, &target);
        assert!(
            (loss - expect).abs() < 1e-5,
            "trial {trial}: {loss} vs oracle {expect}"
        );
    }
}

#[test]
fn multiscale_degenerates_to_plain_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let target = Array4::from_shape_fn((1, 4, 8, 8), |_| u8::from(rng.gen_bool(0.5)));
    let data: Vec<f32> = (0..2 * 4 * 8 * 8).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let main = Var::constant(ArrayD::from_shape_vec(IxDyn(&[1, 2, 4, 8, 8]), data).unwrap());
    let out = ModelOutput {
        main: main.clone(),
        aux: vec![],
    };
    let a = multiscale_loss(&out, &target).unwrap().scalar();
    let b = dice_ce_loss(&main, &target).unwrap().scalar();
    assert_eq!(a, b);
}

#[test]
fn multiscale_matches_hand_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let target = Array4::from_shape_fn((1, 4, 8, 8), |_| u8::from(rng.gen_bool(0.5)));
    let mk = |shape: &[usize], rng: &mut ChaCha8Rng| {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Var::constant(ArrayD::from_shape_vec(IxDyn(shape), data).unwrap())
    };
    let main = mk(&[1, 2, 4, 8, 8], &mut rng);
    let aux0 = mk(&[1, 2, 4, 4, 4], &mut rng);
    let aux1 = mk(&[1, 2, 2, 2, 2], &mut rng);
    let out = ModelOutput {
        main: main.clone(),
        aux: vec![aux0.clone(), aux1.clone()],
    };
    let total = multiscale_loss(&out, &target).unwrap().scalar() as f64;

    let t0 = downsample_target_nn(&target, [4, 4, 4]);
    let t1 = downsample_target_nn(&target, [2, 2, 2]);
    let l_main = dice_ce_loss(&main, &target).unwrap().scalar() as f64;
    let l0 = dice_ce_loss(&aux0, &t0).unwrap().scalar() as f64;
    let l1 = dice_ce_loss(&aux1, &t1).unwrap().scalar() as f64;
    let norm = 1.0 + 0.5 + 0.25;
    let hand = (l_main + 0.5 * l0 + 0.25 * l1) / norm;
    assert!((total - hand).abs() < 1e-6, "{total} vs {hand}");
}

#[test]
fn perfect_multiscale_loss_near_zero() {
    let target = checkerboard((1, 4, 8, 8));
    let main = saturated_logits(&target, 20.0, true);
    let t0 = downsample_target_nn(&target, [4, 4, 4]);
    let t1 = downsample_target_nn(&target, [2, 2, 2]);
    let out = ModelOutput {
        main,
        aux: vec![
            saturated_logits(&t0, 20.0, true),
            saturated_logits(&t1, 20.0, true),
        ],
    };
    let loss = multiscale_loss(&out, &target).unwrap().scalar() as f64;
    assert!(loss < 0.01, "{loss}");
}

#[test]
fn downsample_nn_index_mapping() {
    let target = Array4::from_shape_fn((1, 4, 4, 4), |(_, d, h, w)| (d * 16 + h * 4 + w) as u8 % 2);
    let small = downsample_target_nn(&target, [2, 2, 2]);
    for d in 0..2 {
        for h in 0..2 {
            for w in 0..2 {
                assert_eq!(small[(0, d, h, w)], target[(0, 2 * d, 2 * h, 2 * w)]);
            }
        }
    }
}

#[test]
fn gradient_matches_finite_differences_in_f64() {
    // 2x3x3x3 logits tensor, double precision, relative 1e-3
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let target = ArrayD::from_shape_vec(
        IxDyn(&[1, 3, 3, 3]),
        (0..27).map(|_| u8::from(rng.gen_bool(0.5))).collect(),
    )
    .unwrap();
    let data = vec![ArrayD::from_shape_vec(
        IxDyn(&[1, 2, 3, 3, 3]),
        (0..54).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    )
    .unwrap()];
    let report = fd_check_data(&data, 1e-6, |_t, vars| {
        ops::softmax_dice_ce(&vars[0], &target, DICE_SMOOTH, 1)
    });
    assert!(
        report.max_rel_err < 1e-3 || report.worst < 1e-3,
        "rel {:.3e} abs {:.3e}",
        report.max_rel_err,
        report.max_abs_err
    );
}

#[test]
fn shape_mismatch_rejected() {
    let target = checkerboard((1, 4, 4, 4));
    let logits = Var::constant(ArrayD::zeros(IxDyn(&[1, 2, 4, 4, 8])));
    assert!(dice_ce_loss(&logits, &target).is_err());
}
