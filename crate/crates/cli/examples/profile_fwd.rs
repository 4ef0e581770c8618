//! Timing breakdown of toy forward/backward passes.

use std::time::Instant;

use ndarray::{Array4, ArrayD, IxDyn};
use trabs_autograd::{ops, Tape, Var};
use trabs_model::loss::multiscale_loss;
use trabs_model::{BaselineConfig, NetConfig, Network, TraBSConfig};

fn bench(label: &str, mut f: impl FnMut()) {
    let t0 = Instant::now();
    let mut n = 0;
    while t0.elapsed().as_secs_f64() < 2.0 {
        f();
        n += 1;
    }
    println!("{label}: {:.1} ms/iter ({n} iters)", t0.elapsed().as_secs_f64() * 1e3 / n as f64);
}

fn main() {
    let x2 = ArrayD::from_elem(IxDyn(&[2, 2, 8, 64, 64]), 0.5f32);
    let target = Array4::<u8>::from_elem((2, 8, 64, 64), 0);

    for (name, cfg) in [
        ("trabs-toy", NetConfig::Trabs(TraBSConfig::toy())),
        ("baseline-toy", NetConfig::Baseline(BaselineConfig::toy())),
    ] {
        let net = Network::build(&cfg, 1).unwrap();
        bench(&format!("{name} fwd eval b2"), || {
            let out = net.forward_eval(&Var::constant(x2.clone()));
            std::hint::black_box(out.main.numel());
        });
        bench(&format!("{name} fwd+bwd b2"), || {
            let tape = Tape::<f32>::new();
            let (out, _pv) = net.forward_train(&tape, Var::constant(x2.clone()));
            let loss = multiscale_loss(&out, &target).unwrap();
            let g = tape.backward(&loss);
            std::hint::black_box(&g);
        });
    }

    // isolated kernels at toy shapes
    let x = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 8, 8, 64, 64]), 0.5));
    let w = Var::constant(ArrayD::from_elem(IxDyn(&[8, 8, 1, 3, 3]), 0.1));
    bench("conv3d 8->8 1x3x3 @(8,64,64) b2", || {
        std::hint::black_box(ops::conv3d(&x, &w, None, [1, 1, 1], [0, 1, 1]).numel());
    });
    let g = Var::constant(ArrayD::from_elem(IxDyn(&[2, 16, 8, 64, 64]), 0.5));
    let wg = Var::constant(ArrayD::from_elem(IxDyn(&[16, 8, 3, 3, 3]), 0.1));
    bench("conv3d 8->16 3x3x3 @(8,64,64) b2", || {
        std::hint::black_box(ops::conv3d(&x, &wg, None, [1, 1, 1], [1, 1, 1]).numel());
    });
    std::hint::black_box(g.numel());

    // swin-ish small batched matmuls
    let q = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[512, 32, 4]), 0.5));
    let k = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[512, 32, 4]), 0.5));
    bench("batched matmul 512x(32x4x32)", || {
        std::hint::black_box(ops::batched_matmul(&q, &k, true).numel());
    });
    let a = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[8192, 8]), 0.5));
    let wl = Var::constant(ArrayD::from_elem(IxDyn(&[8, 24]), 0.1));
    bench("linear 8192x8x24", || {
        std::hint::black_box(ops::linear(&a, &wl, None).numel());
    });
    // layer norm + softmax costs
    let t = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[1, 8, 32, 32, 8]), 0.5));
    let gma = Var::constant(ArrayD::from_elem(IxDyn(&[8]), 1.0));
    let bta = Var::constant(ArrayD::from_elem(IxDyn(&[8]), 0.0));
    bench("layer_norm (8,32,32)x8", || {
        std::hint::black_box(ops::layer_norm(&t, &gma, &bta, 1e-5).numel());
    });
    let attn = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[1024, 32, 32]), 0.5));
    bench("softmax 1024x32x32", || {
        std::hint::black_box(attn.softmax(2).numel());
    });
    bench("permute (1,8,32,32,8)", || {
        std::hint::black_box(t.permute(&[0, 4, 1, 2, 3]).numel());
    });
}
