use indexmap::IndexMap;
use std::sync::Arc;

use crate::tensor::Tensor;
use crate::transformer::ParamStore;

/// Gradients keyed by parameter name.
pub type GradMap = IndexMap<String, Tensor>;

/// `d_model^-0.5 · min(step^-0.5, step · warmup^-1.5)`.
pub fn lr_schedule(step: u64, d_model: usize, warmup: u64) -> f64 {
    assert!(step >= 1 && warmup >= 1, "schedule steps start at 1");
    let s = step as f64;
    (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * (warmup as f64).powf(-1.5))
}

pub fn global_norm(grads: &GradMap) -> f64 {
    grads.values().flat_map(|t| t.data()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Scales all gradients by `max_norm / g` when their global L2 norm `g`
/// exceeds `max_norm`. Returns `g` as measured before clipping.
pub fn clip_gradients(grads: &mut GradMap, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grads.values_mut() {
            t.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Adam with bias correction. Moments and updated parameters are rounded to
/// `f32` after every step, so a checkpoint captures the exact state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: IndexMap<String, Tensor>,
    pub v: IndexMap<String, Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: IndexMap<String, Tensor> = params.iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape().to_vec()))).collect();
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &GradMap, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.m.get_mut(name).expect("moment for every parameter");
            let v = self.v.get_mut(name).expect("moment for every parameter");
            let p = Arc::make_mut(p);
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = (self.beta1 * *m + (1.0 - self.beta1) * g) as f32 as f64;
                *v = (self.beta2 * *v + (1.0 - self.beta2) * g * g) as f32 as f64;
                let update = lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                *p = (*p - update) as f32 as f64;
            }
        }
    }
}
