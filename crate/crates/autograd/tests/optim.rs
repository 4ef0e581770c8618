//! Optimizer convergence and parameter persistence.

use ndarray::{ArrayD, IxDyn};
use trabs_autograd::{AdamW, AdamWConfig, Initializer, ParamStore, Tape};

#[test]
fn adamw_minimizes_quadratic() {
    let mut store = ParamStore::new();
    let p = store.register("w", ArrayD::from_elem(IxDyn(&[4]), 5.0f32));
    let cfg = AdamWConfig {
        learning_rate: 0.1,
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(cfg, &store);
    for _ in 0..300 {
        let tape = Tape::<f32>::new();
        let vars = store.leaves(&tape);
        let loss = vars.var(p).mul(vars.var(p)).mean_all();
        let mut grads = tape.backward(&loss);
        let g = grads.take(vars.var(p)).unwrap();
        opt.step(&mut store, &[(p, g)]);
    }
    for &v in store.get(p).iter() {
        assert!(v.abs() < 1e-2, "did not converge: {v}");
    }
    assert_eq!(opt.step_count(), 300);
}

#[test]
fn param_store_save_load_roundtrip() {
    let mut init = Initializer::new(7);
    let mut store = ParamStore::new();
    store.register("conv.weight", init.kaiming_uniform(&[4, 2, 3, 3, 3], 2 * 27));
    store.register("norm.gamma", init.ones(&[4]));
    store.register("head.bias", init.trunc_normal(&[5], 0.02));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.bin");
    store.save(&path).unwrap();
    let loaded = ParamStore::load(&path).unwrap();
    assert_eq!(loaded.len(), store.len());
    for ((_, n1, t1), (_, n2, t2)) in store.iter().zip(loaded.iter()) {
        assert_eq!(n1, n2);
        assert_eq!(t1, t2);
    }
}

#[test]
fn initializer_is_deterministic() {
    let a = Initializer::new(42).kaiming_uniform(&[8, 8], 8);
    let b = Initializer::new(42).kaiming_uniform(&[8, 8], 8);
    assert_eq!(a, b);
    let c = Initializer::new(43).kaiming_uniform(&[8, 8], 8);
    assert_ne!(a, c);
}
