//! Window sampling for training and padding helpers shared with inference.

use ndarray::{s, Array3, Array4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Symmetric zero padding of an image (and aligned mask) up to at least
/// `window` per spatial axis. Returns the pad offsets applied at the front.
pub fn pad_to_window(
    image: &Array4<f32>,
    mask: Option<&Array3<u8>>,
    window: [usize; 3],
) -> (Array4<f32>, Option<Array3<u8>>, [usize; 3]) {
    let s = image.shape();
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    let target = [d.max(window[0]), h.max(window[1]), w.max(window[2])];
    if target == [d, h, w] {
        return (image.clone(), mask.cloned(), [0, 0, 0]);
    }
    let front = [
        (target[0] - d) / 2,
        (target[1] - h) / 2,
        (target[2] - w) / 2,
    ];
    let mut out = Array4::<f32>::zeros((c, target[0], target[1], target[2]));
    out.slice_mut(s![
        ..,
        front[0]..front[0] + d,
        front[1]..front[1] + h,
        front[2]..front[2] + w
    ])
    .assign(image);
    let mask_out = mask.map(|m| {
        let mut mo = Array3::<u8>::zeros((target[0], target[1], target[2]));
        mo.slice_mut(s![
            front[0]..front[0] + d,
            front[1]..front[1] + h,
            front[2]..front[2] + w
        ])
        .assign(m);
        mo
    });
    (out, mask_out, front)
}

/// Uniformly random window of exactly `window` voxels; crops smaller than
/// the window are symmetrically zero-padded first. Deterministic in `seed`.
pub fn sample_window(
    image: &Array4<f32>,
    mask: &Array3<u8>,
    window: [usize; 3],
    seed: u64,
) -> (Array4<f32>, Array3<u8>) {
    let (image, mask, _) = pad_to_window(image, Some(mask), window);
    let mask = mask.unwrap();
    let sdims = image.shape();
    let (d, h, w) = (sdims[1], sdims[2], sdims[3]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off = [
        rng.gen_range(0..=d - window[0]),
        rng.gen_range(0..=h - window[1]),
        rng.gen_range(0..=w - window[2]),
    ];
    let img = image
        .slice(s![
            ..,
            off[0]..off[0] + window[0],
            off[1]..off[1] + window[1],
            off[2]..off[2] + window[2]
        ])
        .to_owned();
    let msk = mask
        .slice(s![
            off[0]..off[0] + window[0],
            off[1]..off[1] + window[1],
            off[2]..off[2] + window[2]
        ])
        .to_owned();
    (img, msk)
}
