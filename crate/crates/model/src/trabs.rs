//! TraBS: a SwinUNETR-style encoder-decoder with non-isotropic patch/kernel
//! geometry in the two upmost stages and 1x1x1 deep-supervision heads.
//!
//! Encoder: residual conv block on the raw input (full resolution), then
//! patch embedding and four swin stages separated by patch merging. The
//! first two downsampling steps use 1x2x2 geometry so the depth axis is
//! preserved; deeper steps are 2x2x2. The decoder mirrors the encoder with
//! transposed-conv upsampling, residual blocks on every skip, and 1x3x3
//! kernels at the depth-preserving resolutions.

use serde::{Deserialize, Serialize};
use trabs_autograd::{Initializer, ParamStore, ParamVars, Var};

use crate::error::{ModelError, Result};
use crate::layers::{Conv3d, ConvTranspose3d, ResBlock};
use crate::net::ModelOutput;
use crate::swin::{to_channel_first, to_channel_last, PatchMerging, SwinStage, Win};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TraBSConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Features per stage, doubling between consecutive stages.
    pub embed_features: Vec<usize>,
    /// Attention heads per stage.
    pub num_heads: Vec<usize>,
    /// Attention window (depth, height, width).
    pub window_size: Win,
    pub blocks_per_stage: usize,
    /// Downsampling factor applied entering each stage: element 0 is the
    /// patch embedding, the rest are patch-merging steps.
    pub stage_factors: Vec<[usize; 3]>,
    pub deep_supervision_levels: usize,
    pub mlp_ratio: f64,
}

impl Default for TraBSConfig {
    fn default() -> Self {
        TraBSConfig {
            in_channels: 2,
            num_classes: 2,
            embed_features: vec![24, 48, 96, 192],
            num_heads: vec![2, 4, 8, 8],
            window_size: [2, 7, 7],
            blocks_per_stage: 2,
            stage_factors: vec![[1, 2, 2], [1, 2, 2], [2, 2, 2], [2, 2, 2]],
            deep_supervision_levels: 2,
            mlp_ratio: 4.0,
        }
    }
}

impl TraBSConfig {
    /// CPU-friendly preset used by the test suite.
    pub fn toy() -> Self {
        TraBSConfig {
            embed_features: vec![8, 16, 32, 64],
            num_heads: vec![2, 2, 4, 4],
            window_size: [2, 4, 4],
            ..TraBSConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stage_factors.len();
        if n == 0 {
            return Err(ModelError::Config("at least one stage required".into()));
        }
        if self.embed_features.len() != n || self.num_heads.len() != n {
            return Err(ModelError::Config(format!(
                "embed_features ({}), num_heads ({}) and stage_factors ({}) must agree",
                self.embed_features.len(),
                self.num_heads.len(),
                n
            )));
        }
        for i in 1..n {
            if self.embed_features[i] != 2 * self.embed_features[i - 1] {
                return Err(ModelError::Config(format!(
                    "embed_features must double per stage, got {:?}",
                    self.embed_features
                )));
            }
        }
        for (f, h) in self.embed_features.iter().zip(&self.num_heads) {
            if h == &0 || f % h != 0 {
                return Err(ModelError::Config(format!(
                    "feature count {f} not divisible by head count {h}"
                )));
            }
        }
        if self.in_channels == 0 || self.num_classes < 2 {
            return Err(ModelError::Config(
                "need in_channels >= 1 and num_classes >= 2".into(),
            ));
        }
        if self.blocks_per_stage == 0 {
            return Err(ModelError::Config("blocks_per_stage must be >= 1".into()));
        }
        if self.deep_supervision_levels > n.saturating_sub(1) {
            return Err(ModelError::Config(format!(
                "deep_supervision_levels {} exceeds decoder levels {}",
                self.deep_supervision_levels,
                n - 1
            )));
        }
        if self.window_size.iter().any(|&w| w == 0) {
            return Err(ModelError::Config("window dims must be >= 1".into()));
        }
        Ok(())
    }

    /// Total (depth, in-plane) downsampling factor over all stages.
    pub fn count_downsampling(&self) -> (usize, usize) {
        let depth = self.stage_factors.iter().map(|f| f[0]).product();
        let inplane = self.stage_factors.iter().map(|f| f[1]).product();
        (depth, inplane)
    }

    /// Kernel at decoder/skip level `level` (0 = full resolution): 1x3x3
    /// while no depth downsampling has happened yet, 3x3x3 after.
    fn level_kernel(&self, level: usize) -> [usize; 3] {
        let depth_factor: usize = self.stage_factors[..level].iter().map(|f| f[0]).product();
        if depth_factor == 1 {
            [1, 3, 3]
        } else {
            [3, 3, 3]
        }
    }

    /// Feature width at pyramid level (level 0 = full resolution).
    fn level_features(&self, level: usize) -> usize {
        if level == 0 {
            self.embed_features[0]
        } else {
            self.embed_features[level - 1]
        }
    }
}

struct UpBlock {
    up: ConvTranspose3d,
    block: ResBlock,
}

pub struct TraBS {
    pub cfg: TraBSConfig,
    enc0: ResBlock,
    patch_embed: Conv3d,
    stages: Vec<SwinStage>,
    merges: Vec<PatchMerging>,
    skip_blocks: Vec<ResBlock>,
    bottleneck: ResBlock,
    ups: Vec<UpBlock>,
    head: Conv3d,
    aux_heads: Vec<Conv3d>,
}

impl TraBS {
    pub fn build(cfg: &TraBSConfig, store: &mut ParamStore, init: &mut Initializer) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.stage_factors.len();
        let f0 = cfg.embed_features[0];

        let enc0 = ResBlock::new(store, init, "enc0", cfg.in_channels, f0, cfg.level_kernel(0));
        let patch = cfg.stage_factors[0];
        let patch_embed = Conv3d::new(
            store,
            init,
            "patch_embed",
            cfg.in_channels,
            f0,
            patch,
            patch,
            [0, 0, 0],
            true,
        );

        let mut stages = Vec::with_capacity(n);
        let mut merges = Vec::with_capacity(n - 1);
        for (i, (&feat, &heads)) in cfg.embed_features.iter().zip(&cfg.num_heads).enumerate() {
            stages.push(SwinStage::new(
                store,
                init,
                &format!("stage{}", i + 1),
                feat,
                heads,
                cfg.window_size,
                cfg.blocks_per_stage,
                cfg.mlp_ratio,
            ));
            if i + 1 < n {
                merges.push(PatchMerging::new(
                    store,
                    init,
                    &format!("merge{}", i + 1),
                    feat,
                    cfg.embed_features[i + 1],
                    cfg.stage_factors[i + 1],
                ));
            }
        }

        // skip blocks on stage outputs at levels 1..n-1, bottleneck on level n
        let mut skip_blocks = Vec::with_capacity(n - 1);
        for level in 1..n {
            let feat = cfg.level_features(level);
            skip_blocks.push(ResBlock::new(
                store,
                init,
                &format!("skip{level}"),
                feat,
                feat,
                cfg.level_kernel(level),
            ));
        }
        let fb = cfg.embed_features[n - 1];
        let bottleneck = ResBlock::new(store, init, "bottleneck", fb, fb, cfg.level_kernel(n));

        // decoder: level i+1 -> level i
        let mut ups = Vec::with_capacity(n);
        for level in (0..n).rev() {
            let in_f = cfg.level_features(level + 1);
            let out_f = cfg.level_features(level);
            let stride = cfg.stage_factors[level];
            let up = ConvTranspose3d::new(
                store,
                init,
                &format!("up{level}"),
                in_f,
                out_f,
                stride,
            );
            let block = ResBlock::new(
                store,
                init,
                &format!("dec{level}"),
                2 * out_f,
                out_f,
                cfg.level_kernel(level),
            );
            ups.push(UpBlock { up, block });
        }

        let head = Conv3d::new(
            store,
            init,
            "head",
            f0,
            cfg.num_classes,
            [1, 1, 1],
            [1, 1, 1],
            [0, 0, 0],
            true,
        );
        let mut aux_heads = Vec::new();
        for k in 0..cfg.deep_supervision_levels {
            let feat = cfg.level_features(k + 1);
            aux_heads.push(Conv3d::new(
                store,
                init,
                &format!("aux{k}"),
                feat,
                cfg.num_classes,
                [1, 1, 1],
                [1, 1, 1],
                [0, 0, 0],
                true,
            ));
        }

        Ok(TraBS {
            cfg: cfg.clone(),
            enc0,
            patch_embed,
            stages,
            merges,
            skip_blocks,
            bottleneck,
            ups,
            head,
            aux_heads,
        })
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 5 {
            return Err(ModelError::Shape(format!(
                "expected [B, C, D, H, W], got {shape:?}"
            )));
        }
        if shape[1] != self.cfg.in_channels {
            return Err(ModelError::Shape(format!(
                "expected {} input channels, got {}",
                self.cfg.in_channels, shape[1]
            )));
        }
        let (fd, fp) = self.cfg.count_downsampling();
        if shape[2] % fd != 0 || shape[3] % fp != 0 || shape[4] % fp != 0 {
            return Err(ModelError::Shape(format!(
                "spatial dims {:?} must be divisible by (depth {fd}, in-plane {fp})",
                &shape[2..]
            )));
        }
        Ok(())
    }

    /// `x [B, C, D, H, W]` -> main logits at input resolution plus aux
    /// logits at successively coarser decoder levels.
    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> ModelOutput {
        self.check_input(x.shape()).expect("invalid input shape");
        let n = self.cfg.stage_factors.len();

        let e0 = self.enc0.forward(pv, x);

        // transformer pyramid, channel-last
        let mut cl = to_channel_last(&self.patch_embed.forward(pv, x));
        let mut skips = Vec::with_capacity(n); // channel-first stage outputs, levels 1..=n
        for i in 0..n {
            cl = self.stages[i].forward(pv, &cl);
            skips.push(to_channel_first(&cl));
            if i + 1 < n {
                cl = self.merges[i].forward(pv, &cl);
            }
        }

        let mut d = self.bottleneck.forward(pv, &skips[n - 1]);
        let mut dec_outputs: Vec<Option<Var<f32>>> = vec![None; n];
        for (j, level) in (0..n).rev().enumerate() {
            let skip = if level == 0 {
                e0.clone()
            } else {
                self.skip_blocks[level - 1].forward(pv, &skips[level - 1])
            };
            let up = self.ups[j].up.forward(pv, &d);
            let cat = trabs_autograd::ops::concat(&[&up, &skip], 1);
            d = self.ups[j].block.forward(pv, &cat);
            dec_outputs[level] = Some(d.clone());
        }

        let main = self.head.forward(pv, dec_outputs[0].as_ref().unwrap());
        let aux = self
            .aux_heads
            .iter()
            .enumerate()
            .map(|(k, h)| h.forward(pv, dec_outputs[k + 1].as_ref().unwrap()))
            .collect();
        ModelOutput { main, aux }
    }
}
