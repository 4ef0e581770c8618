//! Statistics layer: Pearson correlation, bootstrap confidence intervals,
//! paired permutation tests.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

/// Sample mean and std (ddof = 1); std is 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Product-moment correlation in [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CoreError::LengthMismatch { a: x.len(), b: y.len() });
    }
    if x.len() < 2 {
        return Err(CoreError::TooFewValues { need: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CoreError::DegenerateInput(
            "pearson: zero variance input".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Percentile bootstrap CI of the mean from `n_resamples` with-replacement
/// resamples; deterministic for a fixed seed.
pub fn bootstrap_ci(
    values: &[f64],
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(CoreError::TooFewValues { need: 2, got: values.len() });
    }
    assert!(n_resamples >= 1 && alpha > 0.0 && alpha < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += values[rng.gen_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo_idx = ((alpha / 2.0 * n_resamples as f64).floor() as usize).min(n_resamples - 1);
    let hi_idx = (((1.0 - alpha / 2.0) * n_resamples as f64).ceil() as usize)
        .saturating_sub(1)
        .min(n_resamples - 1);
    Ok((means[lo_idx], means[hi_idx]))
}

/// Two-sided paired permutation test on the mean difference via random sign
/// flips: `p = (1 + #{|stat_perm| >= |stat_obs|}) / (1 + n_permutations)`.
pub fn permutation_test(
    paired_a: &[f64],
    paired_b: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<f64> {
    if paired_a.len() != paired_b.len() {
        return Err(CoreError::LengthMismatch {
            a: paired_a.len(),
            b: paired_b.len(),
        });
    }
    if paired_a.len() < 2 {
        return Err(CoreError::TooFewValues {
            need: 2,
            got: paired_a.len(),
        });
    }
    let diffs: Vec<f64> = paired_a.iter().zip(paired_b).map(|(&a, &b)| a - b).collect();
    let n = diffs.len() as f64;
    let obs = diffs.iter().sum::<f64>() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_permutations {
        let mut sum = 0.0;
        for &d in &diffs {
            sum += if rng.gen_bool(0.5) { d } else { -d };
        }
        if (sum / n).abs() >= obs.abs() {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + n_permutations) as f64)
}
