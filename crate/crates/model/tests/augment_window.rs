//! Augmentation invariants and window sampling distribution checks.

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trabs_model::augment::{augment, AugmentConfig};
use trabs_model::window::sample_window;

fn sample_pair(seed: u64) -> (Array4<f32>, Array3<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = Array4::from_shape_fn((2, 6, 12, 12), |_| rng.gen_range(-2.0..2.0));
    let msk = Array3::from_shape_fn((6, 12, 12), |_| u8::from(rng.gen_bool(0.3)));
    (img, msk)
}

#[test]
fn zero_probabilities_is_identity() {
    let (img, msk) = sample_pair(1);
    let (i2, m2) = augment(&img, &msk, &AugmentConfig::disabled(), 99);
    assert_eq!(i2, img);
    assert_eq!(m2, msk);
}

#[test]
fn forced_flip_is_involution() {
    let (img, msk) = sample_pair(2);
    let cfg = AugmentConfig {
        flip_prob: 1.0,
        ..AugmentConfig::disabled()
    };
    // two applications with the same (deterministic) axis choices
    let (i1, m1) = augment(&img, &msk, &cfg, 7);
    let (i2, m2) = augment(&i1, &m1, &cfg, 7);
    assert_eq!(i2, img);
    assert_eq!(m2, msk);
}

#[test]
fn augment_is_deterministic_in_seed() {
    let (img, msk) = sample_pair(3);
    let cfg = AugmentConfig::default();
    let (a_img, a_msk) = augment(&img, &msk, &cfg, 42);
    let (b_img, b_msk) = augment(&img, &msk, &cfg, 42);
    assert_eq!(a_img, b_img);
    assert_eq!(a_msk, b_msk);
    let (c_img, _) = augment(&img, &msk, &cfg, 43);
    assert_ne!(a_img, c_img);
}

#[test]
fn mask_stays_binary_and_shapes_stable_over_100_draws() {
    let (img, msk) = sample_pair(4);
    let cfg = AugmentConfig {
        // force every transform to exercise all paths
        flip_prob: 0.5,
        affine_prob: 1.0,
        ghosting_prob: 1.0,
        noise_prob: 1.0,
        blur_prob: 1.0,
        bias_field_prob: 1.0,
        gamma_prob: 1.0,
        ..AugmentConfig::default()
    };
    for seed in 0..100 {
        let (i2, m2) = augment(&img, &msk, &cfg, seed);
        assert_eq!(i2.shape(), img.shape());
        assert_eq!(m2.shape(), msk.shape());
        assert!(m2.iter().all(|&v| v <= 1), "mask not binary at seed {seed}");
        assert!(
            i2.iter().all(|v| v.is_finite()),
            "non-finite intensity at seed {seed}"
        );
    }
}

#[test]
fn window_equal_size_returns_crop() {
    let (img, msk) = sample_pair(5);
    let (wi, wm) = sample_window(&img, &msk, [6, 12, 12], 1);
    assert_eq!(wi, img);
    assert_eq!(wm, msk);
}

#[test]
fn window_pads_small_crops_symmetrically() {
    let (img, msk) = sample_pair(6);
    let (wi, wm) = sample_window(&img, &msk, [8, 16, 12], 2);
    assert_eq!(wi.shape(), &[2, 8, 16, 12]);
    assert_eq!(wm.shape(), &[8, 16, 12]);
    // original content sits centered: front pads (1, 2, 0)
    assert_eq!(wi[(0, 1, 2, 0)], img[(0, 0, 0, 0)]);
    assert_eq!(wm[(1, 2, 0)], msk[(0, 0, 0)]);
    // padding is zero
    assert_eq!(wi[(0, 0, 0, 0)], 0.0);
}

#[test]
fn window_offsets_cover_valid_range_roughly_uniformly() {
    let img = Array4::<f32>::from_shape_fn((1, 4, 4, 20), |(_, _, _, x)| x as f32);
    let msk = Array3::<u8>::zeros((4, 4, 20));
    // window width 4 -> 17 valid offsets along the last axis
    let n_offsets = 17usize;
    let draws = 1700usize;
    let mut counts = vec![0usize; n_offsets];
    for seed in 0..draws {
        let (wi, _) = sample_window(&img, &msk, [4, 4, 4], seed as u64);
        let off = wi[(0, 0, 0, 0)] as usize;
        counts[off] += 1;
    }
    let expect = draws as f64 / n_offsets as f64; // 100 per offset
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expect).powi(2) / expect)
        .sum();
    // chi-square with 16 dof: 99.9th percentile ~ 39; generous bound
    assert!(chi2 < 60.0, "offset distribution too lumpy: chi2 = {chi2}, counts {counts:?}");
    assert!(counts.iter().all(|&c| c > 0), "some offsets never drawn");
}
