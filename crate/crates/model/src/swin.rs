//! Windowed-attention building blocks: 3D window partitioning, relative
//! position bias, shifted-window attention masks, transformer blocks, and
//! patch merging. Feature maps here are channel-last `[B, D, H, W, C]`.

use std::cell::RefCell;
use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};
use trabs_autograd::{ops, Arr, Initializer, ParamId, ParamStore, ParamVars, Var};

use crate::layers::{LayerNorm, Linear};

pub type Win = [usize; 3];

/// `[B, Dp, Hp, Wp, C] -> [B*nW, N, C]` with `N = wd*wh*ww`.
/// Requires padded dims divisible by the window.
pub fn window_partition(x: &Var<f32>, win: Win) -> Var<f32> {
    let s = x.shape().to_vec();
    let (b, d, h, w, c) = (s[0], s[1], s[2], s[3], s[4]);
    let (wd, wh, ww) = (win[0], win[1], win[2]);
    debug_assert!(d % wd == 0 && h % wh == 0 && w % ww == 0);
    x.reshape(&[b, d / wd, wd, h / wh, wh, w / ww, ww, c])
        .permute(&[0, 1, 3, 5, 2, 4, 6, 7])
        .reshape(&[b * (d / wd) * (h / wh) * (w / ww), wd * wh * ww, c])
}

/// Inverse of [`window_partition`].
pub fn window_reverse(windows: &Var<f32>, win: Win, b: usize, dims: [usize; 3]) -> Var<f32> {
    let (d, h, w) = (dims[0], dims[1], dims[2]);
    let (wd, wh, ww) = (win[0], win[1], win[2]);
    let c = windows.shape()[2];
    windows
        .reshape(&[b, d / wd, h / wh, w / ww, wd, wh, ww, c])
        .permute(&[0, 1, 4, 2, 5, 3, 6, 7])
        .reshape(&[b, d, h, w, c])
}

/// Relative-position lookup indices for all token pairs in one window.
/// Table rows span `(2wd-1)(2wh-1)(2ww-1)` relative offsets.
pub fn relative_position_index(win: Win) -> Vec<usize> {
    let (wd, wh, ww) = (win[0], win[1], win[2]);
    let n = wd * wh * ww;
    let mut coords = Vec::with_capacity(n);
    for z in 0..wd {
        for y in 0..wh {
            for x in 0..ww {
                coords.push([z as isize, y as isize, x as isize]);
            }
        }
    }
    let (sh, sw) = ((2 * wh - 1) as isize, (2 * ww - 1) as isize);
    let mut idx = Vec::with_capacity(n * n);
    for a in &coords {
        for b in &coords {
            let dz = a[0] - b[0] + (wd as isize - 1);
            let dy = a[1] - b[1] + (wh as isize - 1);
            let dx = a[2] - b[2] + (ww as isize - 1);
            idx.push(((dz * sh + dy) * sw + dx) as usize);
        }
    }
    idx
}

pub fn relative_table_len(win: Win) -> usize {
    (2 * win[0] - 1) * (2 * win[1] - 1) * (2 * win[2] - 1)
}

/// Attention mask for shifted windows over a padded grid: `[nW, N, N]` with
/// 0 for same-region pairs and -100 across the cyclic-shift seams.
pub fn shift_attention_mask(dims: [usize; 3], win: Win, shift: [usize; 3]) -> Arr<f32> {
    let (d, h, w) = (dims[0], dims[1], dims[2]);
    let mut label = ArrayD::<f32>::zeros(IxDyn(&[d, h, w]));
    let segments = |len: usize, ws: usize, s: usize| -> Vec<(usize, usize)> {
        if s == 0 {
            vec![(0, len)]
        } else {
            vec![(0, len - ws), (len - ws, len - s), (len - s, len)]
        }
    };
    let mut region = 0.0f32;
    for (z0, z1) in segments(d, win[0], shift[0]) {
        for (y0, y1) in segments(h, win[1], shift[1]) {
            for (x0, x1) in segments(w, win[2], shift[2]) {
                for z in z0..z1 {
                    for y in y0..y1 {
                        for x in x0..x1 {
                            label[[z, y, x]] = region;
                        }
                    }
                }
                region += 1.0;
            }
        }
    }
    // partition labels into windows
    let n = win[0] * win[1] * win[2];
    let n_w = (d / win[0]) * (h / win[1]) * (w / win[2]);
    let labels = Var::constant(label.into_shape_with_order(IxDyn(&[1, d, h, w, 1])).unwrap());
    let wins = window_partition(&labels, win); // [nW, N, 1]
    let wins = wins.to_array();
    let mut mask = ArrayD::<f32>::zeros(IxDyn(&[n_w, n, n]));
    for wi in 0..n_w {
        for i in 0..n {
            for j in 0..n {
                if wins[[wi, i, 0]] != wins[[wi, j, 0]] {
                    mask[[wi, i, j]] = -100.0;
                }
            }
        }
    }
    mask
}

pub struct WindowAttention {
    qkv: Linear,
    proj: Linear,
    bias_table: ParamId,
    index: Vec<usize>,
    heads: usize,
    dim: usize,
    scale: f64,
    win: Win,
}

impl WindowAttention {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
        win: Win,
    ) -> Self {
        assert_eq!(dim % heads, 0);
        let qkv = Linear::new(store, init, &format!("{name}.qkv"), dim, 3 * dim, true);
        let proj = Linear::new(store, init, &format!("{name}.proj"), dim, dim, true);
        let bias_table = store.register(
            format!("{name}.rel_bias"),
            init.trunc_normal(&[relative_table_len(win), heads], 0.02),
        );
        WindowAttention {
            qkv,
            proj,
            bias_table,
            index: relative_position_index(win),
            heads,
            dim,
            scale: ((dim / heads) as f64).powf(-0.5),
            win,
        }
    }

    /// `x [BnW, N, C]`, optional mask `[nW, N, N]` shared across the batch.
    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>, mask: Option<&Arr<f32>>) -> Var<f32> {
        let s = x.shape().to_vec();
        let (bnw, n, c) = (s[0], s[1], s[2]);
        debug_assert_eq!(c, self.dim);
        debug_assert_eq!(n, self.win[0] * self.win[1] * self.win[2]);
        let hd = c / self.heads;

        let qkv = self
            .qkv
            .forward(pv, x)
            .reshape(&[bnw, n, 3, self.heads, hd])
            .permute(&[2, 0, 3, 1, 4]); // [3, BnW, H, N, hd]
        let q = qkv
            .slice(&[0..1, 0..bnw, 0..self.heads, 0..n, 0..hd])
            .reshape(&[bnw * self.heads, n, hd])
            .scale(self.scale);
        let k = qkv
            .slice(&[1..2, 0..bnw, 0..self.heads, 0..n, 0..hd])
            .reshape(&[bnw * self.heads, n, hd]);
        let v = qkv
            .slice(&[2..3, 0..bnw, 0..self.heads, 0..n, 0..hd])
            .reshape(&[bnw * self.heads, n, hd]);

        let attn = ops::batched_matmul(&q, &k, true); // [BnW*H, N, N]

        // relative position bias, broadcast over windows x batch
        let bias = ops::index_select0(pv.var(self.bias_table), &self.index) // [N*N, H]
            .reshape(&[n, n, self.heads])
            .permute(&[2, 0, 1]); // [H, N, N]
        let attn = attn
            .reshape(&[bnw, self.heads, n, n])
            .add_broadcast0(&bias);

        let attn = match mask {
            Some(m) => {
                let nw = m.shape()[0];
                debug_assert_eq!(bnw % nw, 0);
                let b = bnw / nw;
                let m5 = m
                    .clone()
                    .into_shape_with_order(IxDyn(&[1, nw, 1, n, n]))
                    .unwrap();
                attn.reshape(&[b, nw, self.heads, n, n])
                    .add_const_broadcast(&m5)
                    .reshape(&[bnw, self.heads, n, n])
            }
            None => attn,
        };

        let attn = attn.softmax(3).reshape(&[bnw * self.heads, n, n]);
        let out = ops::batched_matmul(&attn, &v, false) // [BnW*H, N, hd]
            .reshape(&[bnw, self.heads, n, hd])
            .permute(&[0, 2, 1, 3])
            .reshape(&[bnw, n, c]);
        self.proj.forward(pv, &out)
    }
}

pub struct SwinBlock {
    norm1: LayerNorm,
    attn: WindowAttention,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    win: Win,
    shift: [usize; 3],
    mask_cache: RefCell<HashMap<[usize; 3], std::rc::Rc<Arr<f32>>>>,
}

impl SwinBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
        win: Win,
        shifted: bool,
        mlp_ratio: f64,
    ) -> Self {
        let hidden = (dim as f64 * mlp_ratio).round() as usize;
        SwinBlock {
            norm1: LayerNorm::new(store, init, &format!("{name}.norm1"), dim),
            attn: WindowAttention::new(store, init, &format!("{name}.attn"), dim, heads, win),
            norm2: LayerNorm::new(store, init, &format!("{name}.norm2"), dim),
            fc1: Linear::new(store, init, &format!("{name}.mlp.fc1"), dim, hidden, true),
            fc2: Linear::new(store, init, &format!("{name}.mlp.fc2"), hidden, dim, true),
            win,
            shift: if shifted {
                [win[0] / 2, win[1] / 2, win[2] / 2]
            } else {
                [0, 0, 0]
            },
            mask_cache: RefCell::new(HashMap::new()),
        }
    }

    /// `x [B, D, H, W, C]`.
    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        let s = x.shape().to_vec();
        let (b, d, h, w, c) = (s[0], s[1], s[2], s[3], s[4]);
        // clamp shift on axes no larger than the window
        let shift: [usize; 3] = std::array::from_fn(|i| {
            if [d, h, w][i] <= self.win[i] {
                0
            } else {
                self.shift[i]
            }
        });
        let pads: [usize; 3] =
            std::array::from_fn(|i| ([d, h, w][i].div_ceil(self.win[i])) * self.win[i] - [d, h, w][i]);
        let padded_dims = [d + pads[0], h + pads[1], w + pads[2]];

        let shortcut = x;
        let mut y = self.norm1.forward(pv, x);
        if pads.iter().any(|&p| p > 0) {
            y = y.pad(&[(0, 0), (0, pads[0]), (0, pads[1]), (0, pads[2]), (0, 0)]);
        }
        let shifted = shift.iter().any(|&s| s > 0);
        if shifted {
            y = y.roll(
                &[-(shift[0] as isize), -(shift[1] as isize), -(shift[2] as isize)],
                &[1, 2, 3],
            );
        }
        let mask = shifted.then(|| {
            self.mask_cache
                .borrow_mut()
                .entry(padded_dims)
                .or_insert_with(|| {
                    std::rc::Rc::new(shift_attention_mask(padded_dims, self.win, shift))
                })
                .clone()
        });
        let windows = window_partition(&y, self.win);
        let attended = self.attn.forward(pv, &windows, mask.as_deref());
        let mut y = window_reverse(&attended, self.win, b, padded_dims);
        if shifted {
            y = y.roll(
                &[shift[0] as isize, shift[1] as isize, shift[2] as isize],
                &[1, 2, 3],
            );
        }
        if pads.iter().any(|&p| p > 0) {
            y = y.slice(&[0..b, 0..d, 0..h, 0..w, 0..c]);
        }
        let x = shortcut.add(&y);
        // MLP
        let m = self.norm2.forward(pv, &x);
        let m = self.fc2.forward(pv, &self.fc1.forward(pv, &m).gelu());
        x.add(&m)
    }
}

/// Concatenates `prod(factor)` neighbors and linearly reduces to `2C`.
pub struct PatchMerging {
    norm: LayerNorm,
    reduce: Linear,
    pub factor: [usize; 3],
}

impl PatchMerging {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        out_dim: usize,
        factor: [usize; 3],
    ) -> Self {
        let f = factor[0] * factor[1] * factor[2];
        PatchMerging {
            norm: LayerNorm::new(store, init, &format!("{name}.norm"), f * dim),
            reduce: Linear::new(store, init, &format!("{name}.reduce"), f * dim, out_dim, false),
            factor,
        }
    }

    /// `x [B, D, H, W, C]` with dims divisible by the factor.
    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        let s = x.shape().to_vec();
        let (b, d, h, w, c) = (s[0], s[1], s[2], s[3], s[4]);
        let [fd, fh, fw] = self.factor;
        assert!(
            d % fd == 0 && h % fh == 0 && w % fw == 0,
            "patch merging with factor {:?} on dims {:?}",
            self.factor,
            &s[1..4]
        );
        let y = x
            .reshape(&[b, d / fd, fd, h / fh, fh, w / fw, fw, c])
            .permute(&[0, 1, 3, 5, 2, 4, 6, 7])
            .reshape(&[b, d / fd, h / fh, w / fw, fd * fh * fw * c]);
        self.reduce.forward(pv, &self.norm.forward(pv, &y))
    }
}

/// A stack of swin blocks with alternating plain and shifted windows.
pub struct SwinStage {
    blocks: Vec<SwinBlock>,
}

impl SwinStage {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
        win: Win,
        depth: usize,
        mlp_ratio: f64,
    ) -> Self {
        let blocks = (0..depth)
            .map(|i| {
                SwinBlock::new(
                    store,
                    init,
                    &format!("{name}.block{i}"),
                    dim,
                    heads,
                    win,
                    i % 2 == 1,
                    mlp_ratio,
                )
            })
            .collect();
        SwinStage { blocks }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        let mut y = x.clone();
        for b in &self.blocks {
            y = b.forward(pv, &y);
        }
        y
    }
}

/// `[B, C, D, H, W] -> [B, D, H, W, C]`.
pub fn to_channel_last(x: &Var<f32>) -> Var<f32> {
    x.permute(&[0, 2, 3, 4, 1])
}

/// `[B, D, H, W, C] -> [B, C, D, H, W]`.
pub fn to_channel_first(x: &Var<f32>) -> Var<f32> {
    x.permute(&[0, 4, 1, 2, 3])
}
