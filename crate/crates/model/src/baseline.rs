//! nnUNet-style 3D U-Net baseline with a configurable pooling schedule.
//!
//! Each schedule entry pairs a max-pool stride with the conv kernel of the
//! level it leaves; the default preserves depth through the first two
//! levels (1x2x2 strides, 1x3x3 kernels) and then pools isotropically.

use serde::{Deserialize, Serialize};
use trabs_autograd::{ops, Initializer, ParamStore, ParamVars, Var};

use crate::error::{ModelError, Result};
use crate::layers::{Conv3d, ConvTranspose3d, DoubleConv};
use crate::net::ModelOutput;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct PoolLevel {
    pub stride: [usize; 3],
    pub kernel: [usize; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BaselineConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub base_features: usize,
    /// Feature width cap per level (doubling from `base_features`).
    pub max_features: usize,
    pub pooling_schedule: Vec<PoolLevel>,
    pub deep_supervision_levels: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            in_channels: 2,
            num_classes: 2,
            base_features: 32,
            max_features: 320,
            pooling_schedule: vec![
                PoolLevel {
                    stride: [1, 2, 2],
                    kernel: [1, 3, 3],
                },
                PoolLevel {
                    stride: [1, 2, 2],
                    kernel: [1, 3, 3],
                },
                PoolLevel {
                    stride: [2, 2, 2],
                    kernel: [3, 3, 3],
                },
                PoolLevel {
                    stride: [2, 2, 2],
                    kernel: [3, 3, 3],
                },
            ],
            deep_supervision_levels: 2,
        }
    }
}

impl BaselineConfig {
    pub fn toy() -> Self {
        BaselineConfig {
            base_features: 8,
            max_features: 128,
            ..BaselineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pooling_schedule.is_empty() {
            return Err(ModelError::Config("pooling schedule must be nonempty".into()));
        }
        for level in &self.pooling_schedule {
            if level.stride.iter().any(|&s| s == 0 || s > 2) {
                return Err(ModelError::Config(format!(
                    "pool strides must be 1 or 2 per axis, got {:?}",
                    level.stride
                )));
            }
            if level.kernel.iter().any(|&k| k == 0 || k % 2 == 0) {
                return Err(ModelError::Config(format!(
                    "conv kernels must be odd, got {:?}",
                    level.kernel
                )));
            }
        }
        if self.in_channels == 0 || self.num_classes < 2 || self.base_features == 0 {
            return Err(ModelError::Config("bad channel configuration".into()));
        }
        if self.deep_supervision_levels > self.pooling_schedule.len() - 1 {
            return Err(ModelError::Config(format!(
                "deep_supervision_levels {} exceeds decoder levels {}",
                self.deep_supervision_levels,
                self.pooling_schedule.len() - 1
            )));
        }
        Ok(())
    }

    pub fn count_downsampling(&self) -> (usize, usize) {
        let depth = self.pooling_schedule.iter().map(|l| l.stride[0]).product();
        let inplane = self.pooling_schedule.iter().map(|l| l.stride[1]).product();
        (depth, inplane)
    }

    fn features(&self, level: usize) -> usize {
        (self.base_features << level).min(self.max_features)
    }

    fn level_kernel(&self, level: usize) -> [usize; 3] {
        let i = level.min(self.pooling_schedule.len() - 1);
        self.pooling_schedule[i].kernel
    }
}

struct Up {
    up: ConvTranspose3d,
    block: DoubleConv,
}

pub struct BaselineUNet {
    pub cfg: BaselineConfig,
    enc: Vec<DoubleConv>,
    bottleneck: DoubleConv,
    ups: Vec<Up>,
    head: Conv3d,
    aux_heads: Vec<Conv3d>,
}

impl BaselineUNet {
    pub fn build(
        cfg: &BaselineConfig,
        store: &mut ParamStore,
        init: &mut Initializer,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.pooling_schedule.len();
        let mut enc = Vec::with_capacity(n);
        for level in 0..n {
            let in_ch = if level == 0 {
                cfg.in_channels
            } else {
                cfg.features(level - 1)
            };
            enc.push(DoubleConv::new(
                store,
                init,
                &format!("enc{level}"),
                in_ch,
                cfg.features(level),
                cfg.level_kernel(level),
            ));
        }
        let bottleneck = DoubleConv::new(
            store,
            init,
            "bottleneck",
            cfg.features(n - 1),
            cfg.features(n),
            cfg.level_kernel(n),
        );
        let mut ups = Vec::with_capacity(n);
        for level in (0..n).rev() {
            let in_f = cfg.features(level + 1);
            let out_f = cfg.features(level);
            ups.push(Up {
                up: ConvTranspose3d::new(
                    store,
                    init,
                    &format!("up{level}"),
                    in_f,
                    out_f,
                    cfg.pooling_schedule[level].stride,
                ),
                block: DoubleConv::new(
                    store,
                    init,
                    &format!("dec{level}"),
                    2 * out_f,
                    out_f,
                    cfg.level_kernel(level),
                ),
            });
        }
        let head = Conv3d::new(
            store,
            init,
            "head",
            cfg.features(0),
            cfg.num_classes,
            [1, 1, 1],
            [1, 1, 1],
            [0, 0, 0],
            true,
        );
        let mut aux_heads = Vec::new();
        for k in 0..cfg.deep_supervision_levels {
            aux_heads.push(Conv3d::new(
                store,
                init,
                &format!("aux{k}"),
                cfg.features(k + 1),
                cfg.num_classes,
                [1, 1, 1],
                [1, 1, 1],
                [0, 0, 0],
                true,
            ));
        }
        Ok(BaselineUNet {
            cfg: cfg.clone(),
            enc,
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

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> ModelOutput {
        self.check_input(x.shape()).expect("invalid input shape");
        let n = self.cfg.pooling_schedule.len();
        let mut skips = Vec::with_capacity(n);
        let mut cur = x.clone();
        for level in 0..n {
            let e = self.enc[level].forward(pv, &cur);
            let stride = self.cfg.pooling_schedule[level].stride;
            cur = ops::max_pool3d(&e, stride, stride);
            skips.push(e);
        }
        let mut d = self.bottleneck.forward(pv, &cur);
        let mut dec_outputs: Vec<Option<Var<f32>>> = vec![None; n];
        for (j, level) in (0..n).rev().enumerate() {
            let up = self.ups[j].up.forward(pv, &d);
            let cat = ops::concat(&[&up, &skips[level]], 1);
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
