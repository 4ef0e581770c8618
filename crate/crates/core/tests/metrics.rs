//! Metric contracts against brute-force oracles.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trabs_core::error::CoreError;
use trabs_core::metrics::*;
use trabs_core::volume::BinaryMask;

fn mask(data: Array3<u8>, spacing: [f64; 3]) -> BinaryMask {
    BinaryMask::new(data, spacing, "m").unwrap()
}

/// Independent brute-force oracle: surface voxels by 6-neighborhood scan,
/// ASSD by O(nA * nB) pairwise minimum distances.
fn brute_force_assd(a: &Array3<u8>, b: &Array3<u8>, spacing: [f64; 3]) -> Option<f64> {
    let surf = |m: &Array3<u8>| -> Vec<[f64; 3]> {
        let s = m.shape();
        let mut out = Vec::new();
        for ((z, y, x), &v) in m.indexed_iter() {
            if v != 1 {
                continue;
            }
            let mut border = false;
            for (dz, dy, dx) in [
                (-1i64, 0i64, 0i64),
                (1, 0, 0),
                (0, -1, 0),
                (0, 1, 0),
                (0, 0, -1),
                (0, 0, 1),
            ] {
                let (nz, ny, nx) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                if nz < 0
                    || ny < 0
                    || nx < 0
                    || nz >= s[0] as i64
                    || ny >= s[1] as i64
                    || nx >= s[2] as i64
                    || m[(nz as usize, ny as usize, nx as usize)] == 0
                {
                    border = true;
                    break;
                }
            }
            if border {
                out.push([
                    z as f64 * spacing[0],
                    y as f64 * spacing[1],
                    x as f64 * spacing[2],
                ]);
            }
        }
        out
    };
    let sa = surf(a);
    let sb = surf(b);
    if sa.is_empty() || sb.is_empty() {
        return None;
    }
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| {
                        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    Some(0.5 * (directed(&sa, &sb) + directed(&sb, &sa)))
}

fn brute_force_dice(a: &Array3<u8>, b: &Array3<u8>) -> f64 {
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for (x, y) in a.iter().zip(b.iter()) {
        if *x == 1 {
            na += 1;
        }
        if *y == 1 {
            nb += 1;
        }
        if *x == 1 && *y == 1 {
            inter += 1;
        }
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

#[test]
fn dice_examples() {
    let ones = mask(Array3::from_elem((3, 3, 3), 1), [1.0; 3]);
    let zeros = mask(Array3::zeros((3, 3, 3)), [1.0; 3]);
    assert_eq!(dice(&ones, &ones).unwrap(), 1.0);
    assert_eq!(dice(&zeros, &zeros).unwrap(), 1.0); // both empty
    // disjoint nonempty
    let mut a = Array3::<u8>::zeros((2, 2, 2));
    a[(0, 0, 0)] = 1;
    let mut b = Array3::<u8>::zeros((2, 2, 2));
    b[(1, 1, 1)] = 1;
    assert_eq!(dice(&mask(a, [1.0; 3]), &mask(b, [1.0; 3])).unwrap(), 0.0);
    // |A|=2, |B|=2, overlap 1 -> 0.5
    let mut a = Array3::<u8>::zeros((2, 2, 2));
    a[(0, 0, 0)] = 1;
    a[(0, 0, 1)] = 1;
    let mut b = Array3::<u8>::zeros((2, 2, 2));
    b[(0, 0, 1)] = 1;
    b[(1, 0, 0)] = 1;
    assert_eq!(dice(&mask(a, [1.0; 3]), &mask(b, [1.0; 3])).unwrap(), 0.5);
}

#[test]
fn assd_examples() {
    let m = mask(Array3::from_elem((3, 3, 3), 1), [1.0; 3]);
    assert_eq!(assd(&m, &m).unwrap(), 0.0);

    // two single voxels 3 apart along depth with 1mm spacing -> 3.0 mm
    let mut a = Array3::<u8>::zeros((5, 3, 3));
    a[(0, 1, 1)] = 1;
    let mut b = Array3::<u8>::zeros((5, 3, 3));
    b[(3, 1, 1)] = 1;
    let d = assd(&mask(a, [1.0; 3]), &mask(b, [1.0; 3])).unwrap();
    assert!((d - 3.0).abs() < 1e-12, "{d}");

    // empty side is an error
    let empty = mask(Array3::zeros((3, 3, 3)), [1.0; 3]);
    assert!(matches!(assd(&m, &empty), Err(CoreError::EmptyMask { .. })));
}

#[test]
fn assd_scales_with_spacing() {
    let mut a = Array3::<u8>::zeros((6, 6, 6));
    a[(1, 2, 3)] = 1;
    a[(1, 3, 3)] = 1;
    let mut b = Array3::<u8>::zeros((6, 6, 6));
    b[(4, 2, 2)] = 1;
    let d1 = assd_arrays(&a, &b, [1.0, 1.0, 1.0]).unwrap();
    let d2 = assd_arrays(&a, &b, [2.0, 2.0, 2.0]).unwrap();
    assert!((d2 - 2.0 * d1).abs() < 1e-9);
}

#[test]
fn metrics_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let spacings = [[1.0, 1.0, 1.0], [3.0, 1.0, 1.0], [2.5, 0.7, 1.3]];
    let mut assd_checked = 0;
    for trial in 0..60 {
        let spacing = spacings[trial % spacings.len()];
        let p = rng.gen_range(0.2..0.8);
        let a = Array3::from_shape_fn((8, 8, 8), |_| u8::from(rng.gen_bool(p)));
        let b = Array3::from_shape_fn((8, 8, 8), |_| u8::from(rng.gen_bool(p)));
        assert!((dice_arrays(&a, &b) - brute_force_dice(&a, &b)).abs() < 1e-12);
        let fast = assd_arrays(&a, &b, spacing);
        let brute = brute_force_assd(&a, &b, spacing);
        match (fast, brute) {
            (Ok(f), Some(br)) => {
                assert!((f - br).abs() < 1e-9, "assd {f} vs oracle {br}");
                assd_checked += 1;
            }
            (Err(CoreError::EmptyMask { .. }), None) => {}
            (f, br) => panic!("disagreement on emptiness: {f:?} vs {br:?}"),
        }
        // symmetry
        if let (Ok(x), Ok(y)) = (
            assd_arrays(&a, &b, spacing),
            assd_arrays(&b, &a, spacing),
        ) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    assert!(assd_checked > 30);
}

#[test]
fn density_examples() {
    let mut breast = Array3::<u8>::zeros((5, 5, 5));
    for i in 0..100 {
        breast[(i / 25, (i / 5) % 5, i % 5)] = 1;
    }
    let mut fgt = Array3::<u8>::zeros((5, 5, 5));
    for i in 0..10 {
        fgt[(i / 25, (i / 5) % 5, i % 5)] = 1;
    }
    let b = mask(breast.clone(), [1.0; 3]);
    let f = mask(fgt, [1.0; 3]);
    let r = breast_density(&f, &b).unwrap();
    assert!((r.value - 0.10).abs() < 1e-12);
    assert_eq!(r.clipped_voxels, 0);
    // fgt == breast -> 1.0
    let r = breast_density(&b, &b).unwrap();
    assert_eq!(r.value, 1.0);
    // empty breast errors
    let empty = mask(Array3::zeros((5, 5, 5)), [1.0; 3]);
    assert!(matches!(
        breast_density(&f, &empty),
        Err(CoreError::EmptyMask { .. })
    ));
}

#[test]
fn density_clips_outside_voxels() {
    let mut breast = Array3::<u8>::zeros((3, 3, 3));
    breast[(0, 0, 0)] = 1;
    breast[(0, 0, 1)] = 1;
    let mut fgt = Array3::<u8>::zeros((3, 3, 3));
    fgt[(0, 0, 0)] = 1;
    fgt[(2, 2, 2)] = 1; // outside breast
    let r = breast_density(&mask(fgt, [1.0; 3]), &mask(breast, [1.0; 3])).unwrap();
    assert_eq!(r.clipped_voxels, 1);
    assert!((r.value - 0.5).abs() < 1e-12);
}

#[test]
fn bpe_examples() {
    use trabs_core::volume::Volume;
    let pre_data = Array3::from_elem((3, 3, 3), 100.0f32);
    let pre = Volume::new(pre_data.clone(), [1.0; 3], "pre").unwrap();
    let mut fgt = Array3::<u8>::zeros((3, 3, 3));
    fgt[(1, 1, 1)] = 1;
    fgt[(1, 1, 2)] = 1;
    let fgt = mask(fgt, [1.0; 3]);
    // post == pre -> 0%
    let post = Volume::new(pre_data.clone(), [1.0; 3], "post").unwrap();
    assert_eq!(bpe(&pre, &post, &fgt).unwrap(), 0.0);
    // post = 1.5 pre on FGT -> +50%
    let post = Volume::new(pre_data.mapv(|v| v * 1.5), [1.0; 3], "post").unwrap();
    assert!((bpe(&pre, &post, &fgt).unwrap() - 50.0).abs() < 1e-9);
    // empty fgt errors
    let empty = mask(Array3::zeros((3, 3, 3)), [1.0; 3]);
    assert!(matches!(
        bpe(&pre, &post, &empty),
        Err(CoreError::EmptyMask { .. })
    ));
    // non-positive baseline
    let zero_pre = Volume::new(Array3::zeros((3, 3, 3)), [1.0; 3], "z").unwrap();
    assert!(matches!(
        bpe(&zero_pre, &post, &fgt),
        Err(CoreError::NonPositiveBaseline(_))
    ));
}
