//! Inference identities: tiling arithmetic, single-window equivalence,
//! flip-TTA fixed points, majority voting, and the per-case pipeline.

use ndarray::{s, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trabs_core::phantom::{generate_phantom, PhantomSpec};
use trabs_core::BinaryMask;
use trabs_model::infer::*;
use trabs_model::{NetConfig, Network, TraBSConfig};

/// Per-voxel stub: logits = (-x0, +x0). Pointwise, hence flip-equivariant.
fn pointwise_stub() -> FnPredictor<impl Fn(&Array4<f32>) -> Array4<f32>> {
    FnPredictor {
        classes: 2,
        f: |x: &Array4<f32>| {
            let s = x.shape();
            let mut out = Array4::<f32>::zeros((2, s[1], s[2], s[3]));
            let ch0 = x.slice(s![0, .., .., ..]);
            out.slice_mut(s![0, .., .., ..]).assign(&ch0.mapv(|v| -v));
            out.slice_mut(s![1, .., .., ..]).assign(&ch0);
            out
        },
    }
}

fn toy_cfg(window: [usize; 3], tta: bool) -> InferenceConfig {
    InferenceConfig {
        window,
        overlap: 0.5,
        tta_flips: tta,
        blend: Blend::Uniform,
    }
}

#[test]
fn window_positions_examples() {
    // depth 48, window 32, overlap 0.5 -> stride 16 -> {0, 16}
    assert_eq!(window_positions(48, 32, 16), vec![0, 16]);
    // crop no larger than the window -> single position
    assert_eq!(window_positions(32, 32, 16), vec![0]);
    assert_eq!(window_positions(20, 32, 16), vec![0]);
    // boundary clamp dedupes and covers the end
    assert_eq!(window_positions(50, 32, 16), vec![0, 16, 18]);
}

#[test]
fn single_window_equals_softmax_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let image = Array4::from_shape_fn((2, 4, 6, 6), |_| rng.gen_range(-2.0..2.0));
    let stub = pointwise_stub();
    let probs = sliding_window_probs(&stub, &image, &toy_cfg([4, 6, 6], false));
    // expected: softmax over (-x, x) = sigmoid structure
    for z in 0..4 {
        for y in 0..6 {
            for x in 0..6 {
                let v = image[(0, z, y, x)];
                let p1 = 1.0 / (1.0 + (-2.0 * v as f64).exp());
                assert!((probs[(1, z, y, x)] as f64 - p1).abs() < 1e-5);
                let sum = probs[(0, z, y, x)] + probs[(1, z, y, x)];
                assert!((sum - 1.0).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn single_window_equals_network_forward() {
    let net = Network::build(&NetConfig::Trabs(TraBSConfig::toy()), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let image = Array4::from_shape_fn((2, 8, 32, 32), |_| rng.gen_range(-1.0..1.0));
    let probs = sliding_window_probs(&net, &image, &toy_cfg([8, 32, 32], false));
    let mut direct = net.predict_logits(&image);
    // softmax the logits the same way
    let sdims = direct.shape().to_vec();
    for z in 0..sdims[1] {
        for y in 0..sdims[2] {
            for x in 0..sdims[3] {
                let (a, b) = (direct[(0, z, y, x)], direct[(1, z, y, x)]);
                let m = a.max(b);
                let (ea, eb) = ((a - m).exp(), (b - m).exp());
                direct[(0, z, y, x)] = ea / (ea + eb);
                direct[(1, z, y, x)] = eb / (ea + eb);
            }
        }
    }
    let max_err = probs
        .iter()
        .zip(direct.iter())
        .map(|(p, d)| (p - d).abs())
        .fold(0.0f32, f32::max);
    assert!(max_err < 1e-5, "max deviation {max_err}");
}

#[test]
fn overlapping_identical_predictions_blend_to_same_value() {
    // constant-output model; overlapping windows must not change the result
    let stub = FnPredictor {
        classes: 2,
        f: |x: &Array4<f32>| {
            let s = x.shape();
            let mut out = Array4::<f32>::zeros((2, s[1], s[2], s[3]));
            out.slice_mut(s![0, .., .., ..]).fill(0.3);
            out.slice_mut(s![1, .., .., ..]).fill(0.9);
            out
        },
    };
    let image = Array4::<f32>::zeros((2, 12, 8, 8));
    let probs = sliding_window_probs(&stub, &image, &toy_cfg([4, 8, 8], false));
    let expect1 = (0.9f64 - 0.3).exp() / (1.0 + (0.9f64 - 0.3).exp());
    for v in probs.slice(s![1, .., .., ..]).iter() {
        assert!((*v as f64 - expect1).abs() < 1e-6);
    }
}

#[test]
fn tta_fixed_point_for_equivariant_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let image = Array4::from_shape_fn((2, 4, 8, 8), |_| rng.gen_range(-2.0..2.0));
    let stub = pointwise_stub();
    let plain = sliding_window_probs(&stub, &image, &toy_cfg([4, 8, 8], false));
    let tta = tta_predict(&stub, &image, &toy_cfg([4, 8, 8], true));
    let max_err = plain
        .iter()
        .zip(tta.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(max_err < 1e-5, "TTA moved an equivariant model by {max_err}");
}

#[test]
fn tta_equals_manual_flip_average() {
    let net = Network::build(&NetConfig::Trabs(TraBSConfig::toy()), 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let image = Array4::from_shape_fn((2, 8, 32, 32), |_| rng.gen_range(-1.0..1.0));
    let cfg = toy_cfg([8, 32, 32], true);
    let tta = tta_predict(&net, &image, &cfg);

    let plain_cfg = toy_cfg([8, 32, 32], false);
    let mut sum: Option<Array4<f32>> = None;
    for bits in 0..8u8 {
        let axes: Vec<usize> = (0..3).filter(|i| bits >> i & 1 == 1).collect();
        let mut flipped = image.clone();
        for &ax in &axes {
            flipped.invert_axis(ndarray::Axis(ax + 1));
        }
        let mut p = sliding_window_probs(&net, &flipped.as_standard_layout().to_owned(), &plain_cfg);
        for &ax in &axes {
            p.invert_axis(ndarray::Axis(ax + 1));
        }
        let p = p.as_standard_layout().to_owned();
        sum = Some(match sum {
            None => p,
            Some(mut acc) => {
                acc.zip_mut_with(&p, |a, &b| *a += b);
                acc
            }
        });
    }
    let manual = sum.unwrap().mapv(|v| v / 8.0);
    let max_err = tta
        .iter()
        .zip(manual.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(max_err < 1e-6, "manual flip average deviates by {max_err}");
}

#[test]
fn binarize_rules() {
    let mut probs = Array4::<f32>::zeros((2, 1, 1, 3));
    probs[(0, 0, 0, 0)] = 0.4;
    probs[(1, 0, 0, 0)] = 0.6; // foreground
    probs[(0, 0, 0, 1)] = 0.5;
    probs[(1, 0, 0, 1)] = 0.5; // exact tie -> background
    probs[(0, 0, 0, 2)] = 0.7;
    probs[(1, 0, 0, 2)] = 0.3; // background
    let m = binarize(&probs);
    assert_eq!(m[(0, 0, 0)], 1);
    assert_eq!(m[(0, 0, 1)], 0);
    assert_eq!(m[(0, 0, 2)], 0);

    // random maps match the per-voxel argmax oracle
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let p1 = Array3::from_shape_fn((4, 4, 4), |_| rng.gen_range(0.0..1.0f32));
        let mut probs = Array4::<f32>::zeros((2, 4, 4, 4));
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    probs[(1, z, y, x)] = p1[(z, y, x)];
                    probs[(0, z, y, x)] = 1.0 - p1[(z, y, x)];
                }
            }
        }
        let m = binarize(&probs);
        for ((z, y, x), &v) in m.indexed_iter() {
            let expect = u8::from(probs[(1, z, y, x)] > probs[(0, z, y, x)]);
            assert_eq!(v, expect);
        }
    }
}

fn mask_of(data: Array3<u8>) -> BinaryMask {
    BinaryMask::new(data, [1.0; 3], "m").unwrap()
}

#[test]
fn majority_vote_examples_and_oracle() {
    let shape = (3, 3, 3);
    let mk = |bit: u8| mask_of(Array3::from_elem(shape, bit));
    // 3 of 5 positive -> positive
    let v = ensemble_majority_vote(&[mk(1), mk(1), mk(1), mk(0), mk(0)]).unwrap();
    assert!(v.data.iter().all(|&x| x == 1));
    // 2 of 5 positive -> negative
    let v = ensemble_majority_vote(&[mk(1), mk(1), mk(0), mk(0), mk(0)]).unwrap();
    assert!(v.data.iter().all(|&x| x == 0));
    // even split 2 of 4 -> background (conservative tie rule)
    let v = ensemble_majority_vote(&[mk(1), mk(1), mk(0), mk(0)]).unwrap();
    assert!(v.data.iter().all(|&x| x == 0));
    assert!(ensemble_majority_vote(&[]).is_err());

    // random masks vs counting oracle; permutation invariance
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let masks: Vec<BinaryMask> = (0..5)
            .map(|_| mask_of(Array3::from_shape_fn((8, 8, 8), |_| u8::from(rng.gen_bool(0.5)))))
            .collect();
        let vote = ensemble_majority_vote(&masks).unwrap();
        for ((z, y, x), &v) in vote.data.indexed_iter() {
            let count: usize = masks.iter().map(|m| m.data[(z, y, x)] as usize).sum();
            assert_eq!(v, u8::from(count > 2));
        }
        let mut rev: Vec<BinaryMask> = masks.clone();
        rev.reverse();
        let vote2 = ensemble_majority_vote(&rev).unwrap();
        assert_eq!(vote.data, vote2.data);
    }
}

#[test]
fn predict_case_vote_of_one_and_unanimity() {
    let spec = PhantomSpec {
        seed: 11,
        shape: [8, 32, 48],
        target_density: 0.3,
        noise_sigma: 2.0,
        ..PhantomSpec::default()
    };
    let case = generate_phantom(&spec).unwrap();
    let net = Network::build(&NetConfig::Trabs(TraBSConfig::toy()), 12).unwrap();
    let cfg = toy_cfg([8, 32, 32], false);

    let one = predict_case(&[&net], &case, &cfg, 2).unwrap();
    let five = predict_case(&[&net, &net, &net, &net, &net], &case, &cfg, 2).unwrap();
    assert_eq!(one.data, five.data, "unanimous ensemble must equal one model");
    assert_eq!(one.shape(), case.breast_mask.shape());

    // nothing outside the union of crop boxes
    let pair = trabs_core::preprocess::split_breasts(&case, 2).unwrap();
    let mut inside = Array3::<u8>::zeros(case.breast_mask.data.raw_dim());
    for side in pair.sides() {
        for z in side.bb.min[0]..side.bb.max[0] {
            for y in side.bb.min[1]..side.bb.max[1] {
                for x in side.bb.min[2]..side.bb.max[2] {
                    inside[(z, y, x)] = 1;
                }
            }
        }
    }
    for ((z, y, x), &v) in one.data.indexed_iter() {
        if v == 1 {
            assert_eq!(inside[(z, y, x)], 1, "positive voxel outside crop boxes");
        }
    }
}
