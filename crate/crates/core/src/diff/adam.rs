//! Adam with bias-corrected moments (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).

use super::store::{GradBuf, ParamStore};

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        AdamState {
            m: store.entries.iter().map(|e| vec![0.0; e.data.len()]).collect(),
            v: store.entries.iter().map(|e| vec![0.0; e.data.len()]).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One descent step `p <- p - lr * mhat / (sqrt(vhat) + eps)` on every
    /// parameter, treating `grads` as the gradient of the minimized loss.
    pub fn step(&mut self, store: &mut ParamStore, grads: &GradBuf) {
        assert_eq!(self.m.len(), store.len(), "optimizer/store mismatch");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, entry) in store.entries.iter_mut().enumerate() {
            let g = &grads.slots[idx];
            assert_eq!(g.len(), entry.data.len(), "gradient shape mismatch");
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..entry.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / b1t;
                let vhat = v[i] / b2t;
                entry.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(v: f64) -> ParamStore {
        let mut store = ParamStore::new();
        store.register("p", 1, 1, vec![v]);
        store
    }

    #[test]
    fn first_step_size_is_lr() {
        // With g = 1 at t = 1, mhat = vhat = 1 so the update is exactly -lr.
        let mut store = single_param(0.5);
        let mut adam = AdamState::new(&store, 0.1);
        let mut grads = GradBuf::zeros_like(&store);
        grads.slots[0][0] = 1.0;
        adam.step(&mut store, &grads);
        let expected = 0.5 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((store.entries[0].data[0] - expected).abs() < 1e-15);
        assert!((store.entries[0].data[0] - 0.4).abs() < 1e-8);
    }

    #[test]
    fn zero_grad_keeps_params() {
        let mut store = single_param(0.5);
        let mut adam = AdamState::new(&store, 0.1);
        let grads = GradBuf::zeros_like(&store);
        adam.step(&mut store, &grads);
        assert_eq!(store.entries[0].data[0], 0.5);
    }

    #[test]
    fn constant_positive_grad_descends_twice() {
        let mut store = single_param(1.0);
        let mut adam = AdamState::new(&store, 0.05);
        let mut grads = GradBuf::zeros_like(&store);
        grads.slots[0][0] = 3.0;
        let p0 = store.entries[0].data[0];
        adam.step(&mut store, &grads);
        let p1 = store.entries[0].data[0];
        adam.step(&mut store, &grads);
        let p2 = store.entries[0].data[0];
        assert!(p1 < p0 && p2 < p1);
    }
}
