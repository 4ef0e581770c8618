//! AdamW with decoupled weight decay.

use ndarray::ArrayD;

use crate::params::{ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

pub struct AdamW {
    cfg: AdamWConfig,
    step: u64,
    m: Vec<ArrayD<f32>>,
    v: Vec<ArrayD<f32>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore) -> Self {
        let m = store.iter().map(|(_, _, t)| ArrayD::zeros(t.raw_dim())).collect();
        let v = store.iter().map(|(_, _, t)| ArrayD::zeros(t.raw_dim())).collect();
        AdamW {
            cfg,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads` yields `(param, gradient)` pairs; params
    /// without a gradient this step are left untouched (their moments do not
    /// advance either, matching lazy updates).
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, ArrayD<f32>)]) {
        self.step += 1;
        let t = self.step as f64;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bias1 = 1.0 - b1.powf(t);
        let bias2 = 1.0 - b2.powf(t);
        let lr = self.cfg.learning_rate;
        let eps = self.cfg.eps as f32;
        let wd = (lr * self.cfg.weight_decay) as f32;
        for (id, grad) in grads {
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = store.get_mut(*id);
            debug_assert_eq!(p.shape(), grad.shape());
            let (b1f, b2f) = (b1 as f32, b2 as f32);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    *m = b1f * *m + (1.0 - b1f) * g;
                    *v = b2f * *v + (1.0 - b2f) * g * g;
                    let m_hat = *m / bias1 as f32;
                    let v_hat = *v / bias2 as f32;
                    *p -= (lr as f32) * m_hat / (v_hat.sqrt() + eps) + wd * *p;
                });
        }
    }
}
