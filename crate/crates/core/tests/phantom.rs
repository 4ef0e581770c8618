//! Phantom generator contracts: determinism, density targeting, construction
//! guarantees for BPE and the subtraction image.

use trabs_core::error::CoreError;
use trabs_core::metrics::{bpe, breast_density};
use trabs_core::phantom::*;

#[test]
fn deterministic_for_fixed_seed() {
    let spec = PhantomSpec::default();
    let a = generate_phantom(&spec).unwrap();
    let b = generate_phantom(&spec).unwrap();
    assert_eq!(a.pre.data, b.pre.data);
    assert_eq!(a.post.data, b.post.data);
    assert_eq!(a.breast_mask.data, b.breast_mask.data);
    assert_eq!(a.fgt_mask.as_ref().unwrap().data, b.fgt_mask.as_ref().unwrap().data);
}

#[test]
fn density_hits_target() {
    let spec = PhantomSpec {
        seed: 2,
        target_density: 0.5,
        noise_sigma: 0.0,
        ..PhantomSpec::default()
    };
    let case = generate_phantom(&spec).unwrap();
    let d = breast_density(case.fgt_mask.as_ref().unwrap(), &case.breast_mask)
        .unwrap()
        .value;
    assert!((0.4..=0.6).contains(&d), "measured density {d}");
}

#[test]
fn bpe_exact_without_noise() {
    for (ef, expect) in [(1.5, 50.0), (2.0, 100.0)] {
        let spec = PhantomSpec {
            seed: 3,
            enhancement_factor: ef,
            noise_sigma: 0.0,
            ..PhantomSpec::default()
        };
        let case = generate_phantom(&spec).unwrap();
        let v = bpe(&case.pre, &case.post, case.fgt_mask.as_ref().unwrap()).unwrap();
        assert!((v - expect).abs() < 1e-3, "BPE {v} vs {expect}");
    }
}

#[test]
fn subtraction_nonzero_exactly_on_fgt_when_clean() {
    let spec = PhantomSpec {
        seed: 4,
        noise_sigma: 0.0,
        bias_field_strength: 0.0,
        enhancement_factor: 1.5,
        ..PhantomSpec::default()
    };
    let case = generate_phantom(&spec).unwrap();
    let fgt = &case.fgt_mask.as_ref().unwrap().data;
    ndarray::Zip::indexed(&case.pre.data).for_each(|idx, &p| {
        let q = case.post.data[idx];
        if fgt[idx] == 1 {
            assert!((q - p).abs() > 1e-3, "FGT voxel without enhancement at {idx:?}");
        } else {
            assert_eq!(q, p, "non-FGT voxel enhanced at {idx:?}");
        }
    });
}

#[test]
fn fgt_inside_breast() {
    let case = generate_phantom(&PhantomSpec::default()).unwrap();
    ndarray::Zip::from(&case.fgt_mask.as_ref().unwrap().data)
        .and(&case.breast_mask.data)
        .for_each(|&f, &b| {
            assert!(!(f == 1 && b == 0));
        });
}

#[test]
fn infeasible_specs_rejected() {
    let too_small = PhantomSpec {
        shape: [4, 64, 64],
        ..PhantomSpec::default()
    };
    assert!(matches!(
        generate_phantom(&too_small),
        Err(CoreError::InfeasibleSpec(_))
    ));
    let bad_density = PhantomSpec {
        target_density: 1.2,
        ..PhantomSpec::default()
    };
    assert!(generate_phantom(&bad_density).is_err());
}

#[test]
fn cohort_even_spacing_and_determinism() {
    let cfg = CohortConfig::default();
    let a = generate_cohort(5, 7, (0.1, 0.5), &cfg).unwrap();
    let b = generate_cohort(5, 7, (0.1, 0.5), &cfg).unwrap();
    assert_eq!(a.len(), 5);
    for (ca, cb) in a.iter().zip(&b) {
        assert_eq!(ca.pre.data, cb.pre.data);
        assert_eq!(ca.case_id, cb.case_id);
    }
    // evenly spaced target densities 0.1, 0.2, .., 0.5 (within rounding and
    // the order-statistic quantization)
    for (i, case) in a.iter().enumerate() {
        let target = 0.1 + 0.1 * i as f64;
        let d = breast_density(case.fgt_mask.as_ref().unwrap(), &case.breast_mask)
            .unwrap()
            .value;
        assert!(
            (d - target).abs() <= 0.2 * target,
            "case {i}: density {d} vs target {target}"
        );
    }
}

#[test]
fn cohort_passes_case_invariants() {
    let cfg = CohortConfig::default();
    let cases = generate_cohort(20, 1, (0.1, 0.5), &cfg).unwrap();
    assert_eq!(cases.len(), 20);
    for case in &cases {
        case.validate().unwrap();
        case.pre.check_finite().unwrap();
        case.post.check_finite().unwrap();
        assert!(!case.breast_mask.is_empty_mask());
        assert!(!case.fgt_mask.as_ref().unwrap().is_empty_mask());
    }
}
