use serde::{Deserialize, Serialize};

use crate::nn::{Grads, Mlp};

/// Adam moments and step counter for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    fn begin(&mut self) -> (f64, f64) {
        self.t += 1;
        let t = self.t.min(i32::MAX as u64) as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }

    #[inline]
    fn update(&mut self, i: usize, p: &mut f64, g: f64, lr: f64, bc: (f64, f64)) {
        let m = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
        let v = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
        self.m[i] = m;
        self.v[i] = v;
        *p -= lr * (m / bc.0) / ((v / bc.1).sqrt() + self.eps);
    }

    /// One bias-corrected descent step on a flat parameter vector.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed under Adam");
        assert_eq!(grads.len(), params.len(), "gradient length mismatch");
        let bc = self.begin();
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(i, p, g, lr, bc);
        }
    }

    /// Same as [`step`](Self::step) on a network's parameters in flat order.
    pub fn step_net(&mut self, net: &mut Mlp, grads: &Grads, lr: f64) {
        assert_eq!(net.num_params(), self.m.len(), "parameter count changed under Adam");
        let bc = self.begin();
        net.zip_params_mut(grads, |i, p, g| self.update(i, p, g, lr, bc));
    }
}
