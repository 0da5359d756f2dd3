use super::layer::Param;
use super::tensor::Tensor;

/// Adam optimizer with per-parameter first/second moment state.
/// State is keyed by parameter position, which is stable because the layer
/// graph is fixed for the lifetime of the optimizer.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(&p.value.shape)).collect();
            self.v = params.iter().map(|p| Tensor::zeros(&p.value.shape)).collect();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[i].data;
            let v = &mut self.v[i].data;
            for (k, &g) in p.grad.data.iter().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p.value.data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
