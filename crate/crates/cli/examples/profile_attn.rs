//! Micro-benchmarks of the attention-internal tensor ops.

use std::time::Instant;

use ndarray::{ArrayD, IxDyn};
use trabs_autograd::{ops, Var};

fn bench(label: &str, mut f: impl FnMut()) {
    f();
    let t0 = Instant::now();
    let mut n = 0;
    while t0.elapsed().as_secs_f64() < 1.0 {
        f();
        n += 1;
    }
    println!("{label}: {:.2} ms/iter ({n})", t0.elapsed().as_secs_f64() * 1e3 / n as f64);
}

fn main() {
    // stage-1 toy attention shapes, batch 2: BnW = 512, heads 2, N = 32
    let attn4 = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[512, 2, 32, 32]), 0.5));
    let bias = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 32, 32]), 0.1));
    bench("add_broadcast0 [512,2,32,32]+[2,32,32]", || {
        std::hint::black_box(attn4.add_broadcast0(&bias).numel());
    });

    let attn5 = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 256, 2, 32, 32]), 0.5));
    let mask = ArrayD::from_elem(IxDyn(&[1, 256, 1, 32, 32]), -100.0f32);
    bench("add_const_broadcast 5d mask", || {
        std::hint::black_box(attn5.add_const_broadcast(&mask).numel());
    });

    let x = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 8, 32, 32, 8]), 0.5));
    bench("partition reshape+permute+reshape", || {
        let y = x
            .reshape(&[2, 4, 2, 8, 4, 8, 4, 8])
            .permute(&[0, 1, 3, 5, 2, 4, 6, 7])
            .reshape(&[512, 32, 8]);
        std::hint::black_box(y.numel());
    });

    let qkv = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[512, 32, 24]), 0.5));
    bench("qkv reshape+permute+3 slices", || {
        let q5 = qkv.reshape(&[512, 32, 3, 2, 4]).permute(&[2, 0, 3, 1, 4]);
        let q = q5.slice(&[0..1, 0..512, 0..2, 0..32, 0..4]).reshape(&[1024, 32, 4]);
        let k = q5.slice(&[1..2, 0..512, 0..2, 0..32, 0..4]).reshape(&[1024, 32, 4]);
        let v = q5.slice(&[2..3, 0..512, 0..2, 0..32, 0..4]).reshape(&[1024, 32, 4]);
        std::hint::black_box((q.numel(), k.numel(), v.numel()));
    });

    bench("softmax [1024,32,32] axis2", || {
        let a = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[1024, 32, 32]), 0.5));
        std::hint::black_box(a.softmax(2).numel());
    });

    bench("roll (1,2,2) on [2,8,32,32,8]", || {
        std::hint::black_box(x.roll(&[-1, -2, -2], &[1, 2, 3]).numel());
    });

    bench("gelu on [2,8192,32]", || {
        let a = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[2, 8192, 32]), 0.5));
        std::hint::black_box(a.gelu().numel());
    });

    bench("index_select0 1024 rows of [375,2]", || {
        let table = Var::<f32>::constant(ArrayD::from_elem(IxDyn(&[375, 2]), 0.1));
        let idx: Vec<usize> = (0..1024).map(|i| i % 375).collect();
        std::hint::black_box(ops::index_select0(&table, &idx).numel());
    });
}
