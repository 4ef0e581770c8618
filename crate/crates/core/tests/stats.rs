//! Statistics layer contracts: hand-computed values, determinism, analytic
//! sanity checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trabs_core::error::CoreError;
use trabs_core::stats::*;

#[test]
fn pearson_examples() {
    let x = [1.0, 2.0, 3.0, 4.0];
    assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
    assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    let y = [2.0, 1.0, 4.0, 3.0];
    assert!((pearson(&x, &y).unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn pearson_invariant_under_positive_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let y: Vec<f64> = (0..50).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let r0 = pearson(&x, &y).unwrap();
    let xs: Vec<f64> = x.iter().map(|v| 3.5 * v + 11.0).collect();
    let ys: Vec<f64> = y.iter().map(|v| 0.2 * v - 4.0).collect();
    let r1 = pearson(&xs, &ys).unwrap();
    assert!((r0 - r1).abs() < 1e-12);
}

#[test]
fn pearson_degenerate() {
    let x = [1.0, 1.0, 1.0];
    let y = [1.0, 2.0, 3.0];
    assert!(matches!(
        pearson(&x, &y),
        Err(CoreError::DegenerateInput(_))
    ));
    assert!(matches!(
        pearson(&[1.0], &[1.0]),
        Err(CoreError::TooFewValues { .. })
    ));
}

#[test]
fn bootstrap_examples() {
    // constant sample collapses to (c, c)
    let vals = [4.2; 10];
    let (lo, hi) = bootstrap_ci(&vals, 1000, 0.05, 1).unwrap();
    assert_eq!(lo, hi);
    assert!((lo - 4.2).abs() < 1e-12);

    // determinism
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sample: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.0)).collect();
    let a = bootstrap_ci(&sample, 2000, 0.05, 7).unwrap();
    let b = bootstrap_ci(&sample, 2000, 0.05, 7).unwrap();
    assert_eq!(a, b);
    let c = bootstrap_ci(&sample, 2000, 0.05, 8).unwrap();
    assert_ne!(a, c);

    assert!(matches!(
        bootstrap_ci(&[1.0], 100, 0.05, 0),
        Err(CoreError::TooFewValues { .. })
    ));
}

#[test]
fn bootstrap_width_matches_normal_theory() {
    // standard-normal sample of 100: 95% CI width ~ 2 * 1.96 / sqrt(100)
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sample: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
    let (lo, hi) = bootstrap_ci(&sample, 10_000, 0.05, 11).unwrap();
    let width = hi - lo;
    let analytic = 2.0 * 1.96 / 10.0;
    assert!(
        (width - analytic).abs() < 0.2 * analytic,
        "width {width} vs analytic {analytic}"
    );
    // CI brackets the sample mean
    let mean = sample.iter().sum::<f64>() / 100.0;
    assert!(lo <= mean && mean <= hi);
}

#[test]
fn permutation_examples() {
    // identical pairs -> p = 1.0
    let a = [0.5, 0.7, 0.9, 0.4];
    let p = permutation_test(&a, &a, 1000, 5).unwrap();
    assert_eq!(p, 1.0);

    // strong paired effect -> tiny p
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
    let shifted: Vec<f64> = base.iter().map(|v| v + 10.0 + rng.gen_range(-0.01..0.01)).collect();
    let p = permutation_test(&shifted, &base, 10_000, 5).unwrap();
    assert!(p < 0.01, "p = {p}");

    // determinism
    let x: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
    let p1 = permutation_test(&x, &y, 5000, 42).unwrap();
    let p2 = permutation_test(&x, &y, 5000, 42).unwrap();
    assert_eq!(p1, p2);
    assert!(p1 > 0.0 && p1 <= 1.0);

    assert!(matches!(
        permutation_test(&[1.0, 2.0], &[1.0], 100, 0),
        Err(CoreError::LengthMismatch { .. })
    ));
}

#[test]
fn mean_std_edge_cases() {
    let (m, s) = mean_std(&[3.0]);
    assert_eq!((m, s), (3.0, 0.0));
    let (m, s) = mean_std(&[1.0, 3.0]);
    assert!((m - 2.0).abs() < 1e-12);
    assert!((s - std::f64::consts::SQRT_2).abs() < 1e-12);
}
