use crate::matrix::{Matrix, Real};
use crate::param::ParamStore;

/// Adam with bias correction. State is laid out to match one store.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: Real) -> Self {
        let moments = store
            .params()
            .iter()
            .map(|p| {
                let (r, c) = p.value.shape();
                (Matrix::zeros(r, c), Matrix::zeros(r, c))
            })
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients. Does not clear them.
    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(self.moments.len(), store.len(), "optimizer/store mismatch");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (p, (m, v)) in store.params_mut().iter_mut().zip(&mut self.moments) {
            let grad = p.grad.data();
            for (((w, &g), mv), vv) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * g;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * g * g;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Adam for a single scalar (the log-temperature).
#[derive(Clone, Debug)]
pub struct ScalarAdam {
    pub lr: Real,
    m: Real,
    v: Real,
    step: u64,
}

impl ScalarAdam {
    pub fn new(lr: Real) -> Self {
        Self {
            lr,
            m: 0.0,
            v: 0.0,
            step: 0,
        }
    }

    pub fn update(&mut self, value: &mut Real, grad: Real) {
        const B1: Real = 0.9;
        const B2: Real = 0.999;
        self.step += 1;
        let t = self.step as i32;
        self.m = B1 * self.m + (1.0 - B1) * grad;
        self.v = B2 * self.v + (1.0 - B2) * grad * grad;
        let mhat = self.m / (1.0 - B1.powi(t));
        let vhat = self.v / (1.0 - B2.powi(t));
        *value -= self.lr * mhat / (vhat.sqrt() + 1e-8);
    }
}
