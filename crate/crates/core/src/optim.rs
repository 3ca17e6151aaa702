//! Adam optimizer over [`NetworkParams`] with per-group freezing.

use crate::network::{Gradients, NetworkParams, ParamGroup};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    m: Gradients,
    v: Gradients,
    /// step count per parameter tensor, so frozen tensors keep their own
    /// bias correction
    t: Vec<u64>,
}

impl Adam {
    pub fn new(params: &NetworkParams, lr: f64) -> Self {
        let m = Gradients::zeros_like(params);
        let t = vec![0; m.slices().len()];
        Adam { lr, v: m.clone(), m, t }
    }

    /// One update of every tensor whose group satisfies `active`.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients, active: impl Fn(ParamGroup) -> bool) {
        if self.lr == 0.0 {
            return;
        }
        let lr = self.lr;
        let mut ms = self.m.slices_mut();
        let mut vs = self.v.slices_mut();
        let gs = grads.slices();
        for (idx, (group, p)) in params.slices_mut().into_iter().enumerate() {
            if !active(group) {
                continue;
            }
            self.t[idx] += 1;
            let t = self.t[idx] as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            let m = &mut *ms[idx].1;
            let v = &mut *vs[idx].1;
            let g = gs[idx].1;
            for k in 0..p.len() {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
    }
}
