//! Adam optimizer over a [`ParamSet`], with per-tensor state keyed by
//! parameter name so state survives checkpoint round-trips.

use super::param::ParamSet;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global step, shared by all tensors (bias correction).
    pub step: u64,
    pub state: BTreeMap<String, AdamState>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    /// One update from the gradients currently stored in the model.
    pub fn step<M: ParamSet + ?Sized>(&mut self, model: &mut M) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let state = &mut self.state;
        model.visit(
            "",
            &mut |name: &str, _: &[usize], value: &mut [f64], grad: &mut [f64]| {
                let s = state.entry(name.to_string()).or_insert_with(|| AdamState {
                    m: vec![0.0; value.len()],
                    v: vec![0.0; value.len()],
                });
                assert_eq!(s.m.len(), value.len(), "stale Adam state for {name}");
                for i in 0..value.len() {
                    let g = grad[i];
                    s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
                    s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
                    let m_hat = s.m[i] / bc1;
                    let v_hat = s.v[i] / bc2;
                    value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            },
        );
    }
}
