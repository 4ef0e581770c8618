//! Deterministic synthetic breast-MRI phantoms with known ground truth.
//!
//! Geometry: two half-ellipsoid "breasts" protruding anteriorly from a
//! chest-wall slab. FGT is carved from a smoothed noise field inside the
//! breasts, thresholded at the exact order statistic that realizes the
//! requested density. Post-contrast equals pre-contrast with FGT intensities
//! scaled by the enhancement factor; optional Gaussian noise and a shared
//! multiplicative bias field are applied on top, so with zero noise the
//! subtraction image is nonzero exactly on FGT (for enhancement != 1) and
//! the BPE is exact by construction.

use ndarray::Array3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::volume::{BinaryMask, Case, Volume};

pub const FAT_INTENSITY: f32 = 100.0;
pub const FGT_INTENSITY: f32 = 140.0;
pub const CHEST_INTENSITY: f32 = 80.0;
pub const AIR_INTENSITY: f32 = 0.0;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    /// (depth, height, width), each >= 8.
    pub shape: [usize; 3],
    /// Fraction of breast volume occupied by FGT, in (0, 1).
    pub target_density: f64,
    /// Post/pre intensity ratio on FGT voxels, > 0.
    pub enhancement_factor: f64,
    /// Additive Gaussian noise std, >= 0.
    pub noise_sigma: f64,
    /// Multiplicative bias field strength, >= 0.
    pub bias_field_strength: f64,
    /// Voxel spacing in mm (depth, height, width).
    pub spacing: [f64; 3],
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shape.iter().any(|&d| d < 8) {
            return Err(CoreError::InfeasibleSpec(format!(
                "shape components must be >= 8, got {:?}",
                self.shape
            )));
        }
        if !(self.target_density > 0.0 && self.target_density < 1.0) {
            return Err(CoreError::InfeasibleSpec(format!(
                "target_density must be in (0,1), got {}",
                self.target_density
            )));
        }
        if !(self.enhancement_factor > 0.0) {
            return Err(CoreError::InfeasibleSpec(
                "enhancement_factor must be > 0".into(),
            ));
        }
        if self.noise_sigma < 0.0 || self.bias_field_strength < 0.0 {
            return Err(CoreError::InfeasibleSpec(
                "noise_sigma and bias_field_strength must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            seed: 0,
            shape: [16, 64, 96],
            target_density: 0.3,
            enhancement_factor: 1.8,
            noise_sigma: 4.0,
            bias_field_strength: 0.15,
            spacing: [3.0, 1.0, 1.0],
        }
    }
}

/// Separable box blur, one pass per axis, radius `r` voxels (edge-clamped).
fn box_blur(field: &mut Array3<f64>, radii: [usize; 3]) {
    let shape = [field.shape()[0], field.shape()[1], field.shape()[2]];
    for ax in 0..3 {
        let r = radii[ax];
        if r == 0 {
            continue;
        }
        let out = field.clone();
        let n = shape[ax] as isize;
        ndarray::Zip::indexed(field.view_mut()).for_each(|idx, v| {
            let idx = [idx.0, idx.1, idx.2];
            let mut sum = 0.0;
            let mut cnt = 0.0;
            for o in -(r as isize)..=(r as isize) {
                let j = idx[ax] as isize + o;
                if j < 0 || j >= n {
                    continue;
                }
                let mut src = idx;
                src[ax] = j as usize;
                sum += out[(src[0], src[1], src[2])];
                cnt += 1.0;
            }
            *v = sum / cnt;
        });
    }
}

struct Geometry {
    breast: Array3<u8>,
    chest: Array3<u8>,
}

fn build_geometry(shape: [usize; 3]) -> Geometry {
    let [d, h, w] = shape;
    let h_wall = ((h as f64) * 0.72).floor() as usize;
    let centers_w = [0.27 * w as f64, 0.73 * w as f64];
    let (cd, ch) = ((d as f64 - 1.0) / 2.0, h_wall as f64);
    let (rd, rh, rw) = (0.42 * d as f64, 0.80 * h_wall as f64, 0.20 * w as f64);

    let mut breast = Array3::<u8>::zeros(shape);
    let mut chest = Array3::<u8>::zeros(shape);
    for ((di, hi, wi), v) in breast.indexed_iter_mut() {
        if hi >= h_wall {
            chest[(di, hi, wi)] = 1;
            continue;
        }
        for &cw in &centers_w {
            let zd = (di as f64 - cd) / rd;
            let yd = (hi as f64 - ch) / rh;
            let xd = (wi as f64 - cw) / rw;
            if zd * zd + yd * yd + xd * xd <= 1.0 {
                *v = 1;
                break;
            }
        }
    }
    Geometry { breast, chest }
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Case> {
    spec.validate()?;
    let shape = spec.shape;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let geo = build_geometry(shape);

    let breast_count = geo.breast.iter().filter(|&&v| v == 1).count();
    if breast_count == 0 {
        return Err(CoreError::InfeasibleSpec(
            "breast region is empty at this shape".into(),
        ));
    }
    let k = (spec.target_density * breast_count as f64).round() as usize;
    if k == 0 || k >= breast_count {
        return Err(CoreError::InfeasibleSpec(format!(
            "target_density {} unreachable with {} breast voxels",
            spec.target_density, breast_count
        )));
    }
    let achieved = k as f64 / breast_count as f64;
    if (achieved - spec.target_density).abs() > 0.2 * spec.target_density {
        return Err(CoreError::InfeasibleSpec(format!(
            "achievable density {achieved:.4} misses target {} by more than 20%",
            spec.target_density
        )));
    }

    // FGT = k largest values of a smoothed noise field inside the breast.
    let mut field = Array3::<f64>::zeros(shape);
    for v in field.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    for _ in 0..3 {
        box_blur(&mut field, [1, 2, 2]);
    }
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(breast_count);
    for (flat, (&b, &f)) in geo.breast.iter().zip(field.iter()).enumerate() {
        if b == 1 {
            candidates.push((f, flat));
        }
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut fgt = Array3::<u8>::zeros(shape);
    {
        let flat = fgt.as_slice_memory_order_mut().unwrap();
        for &(_, idx) in candidates.iter().take(k) {
            flat[idx] = 1;
        }
    }

    // Intensities.
    let mut pre = Array3::<f32>::from_elem(shape, AIR_INTENSITY);
    ndarray::Zip::from(&mut pre)
        .and(&geo.breast)
        .and(&geo.chest)
        .and(&fgt)
        .for_each(|p, &b, &c, &f| {
            *p = if f == 1 {
                FGT_INTENSITY
            } else if b == 1 {
                FAT_INTENSITY
            } else if c == 1 {
                CHEST_INTENSITY
            } else {
                AIR_INTENSITY
            };
        });
    let mut post = pre.clone();
    let ef = spec.enhancement_factor as f32;
    ndarray::Zip::from(&mut post).and(&fgt).for_each(|p, &f| {
        if f == 1 {
            *p *= ef;
        }
    });

    // Shared multiplicative bias field (order-2 polynomial in the exponent).
    if spec.bias_field_strength > 0.0 {
        let s = spec.bias_field_strength;
        let coeffs: Vec<f64> = (0..9).map(|_| rng.gen_range(-s..s)).collect();
        let [d, h, w] = shape;
        let norm = |i: usize, n: usize| 2.0 * (i as f64) / ((n - 1).max(1) as f64) - 1.0;
        ndarray::Zip::indexed(&mut pre).and(&mut post).for_each(|(di, hi, wi), p, q| {
            let (z, y, x) = (norm(di, d), norm(hi, h), norm(wi, w));
            let e = coeffs[0] * z
                + coeffs[1] * y
                + coeffs[2] * x
                + coeffs[3] * z * z
                + coeffs[4] * y * y
                + coeffs[5] * x * x
                + coeffs[6] * z * y
                + coeffs[7] * z * x
                + coeffs[8] * y * x;
            let field = e.exp() as f32;
            *p *= field;
            *q *= field;
        });
    }

    // Independent additive noise per volume.
    if spec.noise_sigma > 0.0 {
        let s = spec.noise_sigma as f32;
        for v in pre.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += s * n as f32;
        }
        for v in post.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += s * n as f32;
        }
    }

    let case_id = format!("phantom_s{}", spec.seed);
    let case = Case {
        pre: Volume::new(pre, spec.spacing, format!("{case_id}_pre"))?,
        post: Volume::new(post, spec.spacing, format!("{case_id}_post"))?,
        breast_mask: BinaryMask::new(geo.breast, spec.spacing, format!("{case_id}_breast"))?,
        fgt_mask: Some(BinaryMask::new(fgt, spec.spacing, format!("{case_id}_fgt"))?),
        case_id,
    };
    case.validate()?;
    Ok(case)
}

/// Cohort generation defaults shared by CLI and tests.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CohortConfig {
    pub shape: [usize; 3],
    pub enhancement_factor: f64,
    pub noise_sigma: f64,
    pub bias_field_strength: f64,
    pub spacing: [f64; 3],
}

impl Default for CohortConfig {
    fn default() -> Self {
        let s = PhantomSpec::default();
        CohortConfig {
            shape: s.shape,
            enhancement_factor: s.enhancement_factor,
            noise_sigma: s.noise_sigma,
            bias_field_strength: s.bias_field_strength,
            spacing: s.spacing,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// `n` phantoms with target densities evenly spaced over `[lo, hi]` and
/// per-case seeds derived from the master seed.
pub fn generate_cohort(
    n: usize,
    seed: u64,
    density_range: (f64, f64),
    cfg: &CohortConfig,
) -> Result<Vec<Case>> {
    let (lo, hi) = density_range;
    if n < 1 {
        return Err(CoreError::InfeasibleSpec("cohort size must be >= 1".into()));
    }
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(CoreError::InfeasibleSpec(format!(
            "density range must satisfy 0 < lo < hi < 1, got ({lo}, {hi})"
        )));
    }
    let mut cases = Vec::with_capacity(n);
    for i in 0..n {
        let density = if n == 1 {
            (lo + hi) / 2.0
        } else {
            lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
        };
        let spec = PhantomSpec {
            seed: splitmix64(seed ^ (i as u64).wrapping_mul(0x51ed2701)),
            shape: cfg.shape,
            target_density: density,
            enhancement_factor: cfg.enhancement_factor,
            noise_sigma: cfg.noise_sigma,
            bias_field_strength: cfg.bias_field_strength,
            spacing: cfg.spacing,
        };
        let mut case = generate_phantom(&spec)?;
        let id = format!("phantom_{i:03}");
        case.pre.id = format!("{id}_pre");
        case.post.id = format!("{id}_post");
        case.breast_mask.id = format!("{id}_breast");
        if let Some(m) = &mut case.fgt_mask {
            m.id = format!("{id}_fgt");
        }
        case.case_id = id;
        cases.push(case);
    }
    Ok(cases)
}
