//! Parameterized layers: thin structs holding ParamIds plus a forward that
//! materializes them from the per-pass [`ParamVars`].

use trabs_autograd::{ops, Initializer, ParamId, ParamStore, ParamVars, Var};

pub struct Conv3d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        bias: bool,
    ) -> Self {
        let fan_in = in_ch * kernel[0] * kernel[1] * kernel[2];
        let w = store.register(
            format!("{name}.weight"),
            init.kaiming_uniform(&[out_ch, in_ch, kernel[0], kernel[1], kernel[2]], fan_in),
        );
        let b = bias.then(|| store.register(format!("{name}.bias"), init.zeros(&[out_ch])));
        Conv3d {
            w,
            b,
            stride,
            padding,
        }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        ops::conv3d(
            x,
            pv.var(self.w),
            self.b.map(|b| pv.var(b)),
            self.stride,
            self.padding,
        )
    }
}

/// Transposed conv with kernel == stride (upsampling).
pub struct ConvTranspose3d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: [usize; 3],
}

impl ConvTranspose3d {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        stride: [usize; 3],
    ) -> Self {
        let fan_in = in_ch * stride[0] * stride[1] * stride[2];
        let w = store.register(
            format!("{name}.weight"),
            init.kaiming_uniform(&[in_ch, out_ch, stride[0], stride[1], stride[2]], fan_in),
        );
        let b = Some(store.register(format!("{name}.bias"), init.zeros(&[out_ch])));
        ConvTranspose3d { w, b, stride }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        ops::conv_transpose3d(x, pv.var(self.w), self.b.map(|b| pv.var(b)), self.stride)
    }
}

pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_f: usize,
        out_f: usize,
        bias: bool,
    ) -> Self {
        let w = store.register(format!("{name}.weight"), init.trunc_normal(&[in_f, out_f], 0.02));
        let b = bias.then(|| store.register(format!("{name}.bias"), init.zeros(&[out_f])));
        Linear { w, b }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        ops::linear(x, pv.var(self.w), self.b.map(|b| pv.var(b)))
    }
}

pub struct LayerNorm {
    pub g: ParamId,
    pub b: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, dim: usize) -> Self {
        LayerNorm {
            g: store.register(format!("{name}.gamma"), init.ones(&[dim])),
            b: store.register(format!("{name}.beta"), init.zeros(&[dim])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        ops::layer_norm(x, pv.var(self.g), pv.var(self.b), self.eps)
    }
}

pub struct InstanceNorm {
    pub g: ParamId,
    pub b: ParamId,
    pub eps: f64,
}

impl InstanceNorm {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, channels: usize) -> Self {
        InstanceNorm {
            g: store.register(format!("{name}.gamma"), init.ones(&[channels])),
            b: store.register(format!("{name}.beta"), init.zeros(&[channels])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        ops::instance_norm(x, pv.var(self.g), pv.var(self.b), self.eps)
    }
}

const LEAKY_SLOPE: f64 = 0.01;

/// Residual conv block: (conv -> IN -> lrelu) x2 with a 1x1x1 projected
/// shortcut when channel counts differ; final activation after the add.
pub struct ResBlock {
    conv1: Conv3d,
    norm1: InstanceNorm,
    conv2: Conv3d,
    norm2: InstanceNorm,
    shortcut: Option<(Conv3d, InstanceNorm)>,
}

impl ResBlock {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 3],
    ) -> Self {
        let padding = [kernel[0] / 2, kernel[1] / 2, kernel[2] / 2];
        let conv1 = Conv3d::new(
            store,
            init,
            &format!("{name}.conv1"),
            in_ch,
            out_ch,
            kernel,
            [1, 1, 1],
            padding,
            true,
        );
        let norm1 = InstanceNorm::new(store, init, &format!("{name}.norm1"), out_ch);
        let conv2 = Conv3d::new(
            store,
            init,
            &format!("{name}.conv2"),
            out_ch,
            out_ch,
            kernel,
            [1, 1, 1],
            padding,
            true,
        );
        let norm2 = InstanceNorm::new(store, init, &format!("{name}.norm2"), out_ch);
        let shortcut = (in_ch != out_ch).then(|| {
            (
                Conv3d::new(
                    store,
                    init,
                    &format!("{name}.short"),
                    in_ch,
                    out_ch,
                    [1, 1, 1],
                    [1, 1, 1],
                    [0, 0, 0],
                    true,
                ),
                InstanceNorm::new(store, init, &format!("{name}.short_norm"), out_ch),
            )
        });
        ResBlock {
            conv1,
            norm1,
            conv2,
            norm2,
            shortcut,
        }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        let y = self.norm1.forward(pv, &self.conv1.forward(pv, x)).leaky_relu(LEAKY_SLOPE);
        let y = self.norm2.forward(pv, &self.conv2.forward(pv, &y));
        let short = match &self.shortcut {
            Some((conv, norm)) => norm.forward(pv, &conv.forward(pv, x)),
            None => x.clone(),
        };
        y.add(&short).leaky_relu(LEAKY_SLOPE)
    }
}

/// Plain double conv block (conv -> IN -> lrelu) x2.
pub struct DoubleConv {
    conv1: Conv3d,
    norm1: InstanceNorm,
    conv2: Conv3d,
    norm2: InstanceNorm,
}

impl DoubleConv {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 3],
    ) -> Self {
        let padding = [kernel[0] / 2, kernel[1] / 2, kernel[2] / 2];
        DoubleConv {
            conv1: Conv3d::new(
                store,
                init,
                &format!("{name}.conv1"),
                in_ch,
                out_ch,
                kernel,
                [1, 1, 1],
                padding,
                true,
            ),
            norm1: InstanceNorm::new(store, init, &format!("{name}.norm1"), out_ch),
            conv2: Conv3d::new(
                store,
                init,
                &format!("{name}.conv2"),
                out_ch,
                out_ch,
                kernel,
                [1, 1, 1],
                padding,
                true,
            ),
            norm2: InstanceNorm::new(store, init, &format!("{name}.norm2"), out_ch),
        }
    }

    pub fn forward(&self, pv: &ParamVars, x: &Var<f32>) -> Var<f32> {
        let y = self.norm1.forward(pv, &self.conv1.forward(pv, x)).leaky_relu(LEAKY_SLOPE);
        self.norm2.forward(pv, &self.conv2.forward(pv, &y)).leaky_relu(LEAKY_SLOPE)
    }
}
