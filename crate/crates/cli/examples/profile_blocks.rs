//! Narrower timing: individual blocks of both architectures.

use std::time::Instant;

use ndarray::{ArrayD, IxDyn};
use trabs_autograd::{ops, Initializer, ParamStore, Var};
use trabs_model::layers::{Conv3d, DoubleConv, InstanceNorm, ResBlock};
use trabs_model::swin::SwinStage;

fn bench(label: &str, mut f: impl FnMut()) {
    // warm
    f();
    let t0 = Instant::now();
    let mut n = 0;
    while t0.elapsed().as_secs_f64() < 1.5 {
        f();
        n += 1;
    }
    println!("{label}: {:.2} ms/iter ({n})", t0.elapsed().as_secs_f64() * 1e3 / n as f64);
}

fn main() {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(1);

    let dc = DoubleConv::new(&mut store, &mut init, "dc", 2, 8, [1, 3, 3]);
    let rb = ResBlock::new(&mut store, &mut init, "rb", 16, 8, [1, 3, 3]);
    let inorm = InstanceNorm::new(&mut store, &mut init, "in", 8);
    let conv88 = Conv3d::new(&mut store, &mut init, "c88", 8, 8, [1, 3, 3], [1, 1, 1], [0, 1, 1], true);
    let stage = SwinStage::new(&mut store, &mut init, "st", 8, 2, [2, 4, 4], 2, 4.0);
    let pv = store.constants();

    let x2 = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 2, 8, 64, 64]), 0.5));
    let x8 = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 8, 8, 64, 64]), 0.5));
    let x16 = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 16, 8, 64, 64]), 0.5));
    let cl = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 8, 32, 32, 8]), 0.5));

    bench("DoubleConv 2->8 @full b2", || {
        std::hint::black_box(dc.forward(&pv, &x2).numel());
    });
    bench("ResBlock 16->8 @full b2", || {
        std::hint::black_box(rb.forward(&pv, &x16).numel());
    });
    bench("InstanceNorm 8ch @full b2", || {
        std::hint::black_box(inorm.forward(&pv, &x8).numel());
    });
    bench("conv 8->8 @full b2", || {
        std::hint::black_box(conv88.forward(&pv, &x8).numel());
    });
    bench("leaky_relu @full 8ch b2", || {
        std::hint::black_box(x8.leaky_relu(0.01).numel());
    });
    bench("add @full 8ch b2", || {
        std::hint::black_box(x8.add(&x8).numel());
    });
    bench("concat @full 8+8 b2", || {
        std::hint::black_box(ops::concat(&[&x8, &x8], 1).numel());
    });
    bench("max_pool 1x2x2 @full 8ch b2", || {
        std::hint::black_box(ops::max_pool3d(&x8, [1, 2, 2], [1, 2, 2]).numel());
    });
    bench("SwinStage d2 C8 @(8,32,32) b2", || {
        std::hint::black_box(stage.forward(&pv, &cl).numel());
    });
}
