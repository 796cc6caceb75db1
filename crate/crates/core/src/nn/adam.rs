use super::{ParamStore, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

/// Adam with bias correction. Moments are kept in `f64`.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new<T: Scalar>(store: &ParamStore<T>, cfg: AdamConfig) -> Self {
        let zeros = |id| vec![0.0; store.value(id).len()];
        Self {
            cfg,
            m: store.ids().map(zeros).collect(),
            v: store.ids().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the store's gradients, then zeroes them.
    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let scale = match self.cfg.clip_norm {
            Some(max) => {
                let norm = store.grad_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let g: Vec<f64> = store.grad(id).data().iter().map(|v| v.as_f64() * scale).collect();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = store.value_mut(id).data_mut();
            for j in 0..g.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let upd = c.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + c.eps);
                w[j] = T::lit(w[j].as_f64() - upd);
            }
        }
        store.zero_grads();
    }
}
