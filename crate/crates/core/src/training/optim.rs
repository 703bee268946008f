use crate::error::{Error, Result};
use crate::model::Weights;
use crate::tensor::Tensor;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Weights<Tensor>,
    v: Weights<Tensor>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &Weights<Tensor>, weight_decay: f64) -> Self {
        let zeros = params.map(|_, t| Tensor::zeros(t.shape()));
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update. `lr` gives each parameter's learning rate by name.
    pub fn step(
        &mut self,
        params: &mut Weights<Tensor>,
        grads: &Weights<Tensor>,
        lr: impl Fn(&str) -> f64,
    ) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let names = params.names();
        let slots = params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .zip(&names);
        for (((p, g), (m, v)), name) in slots {
            if p.shape() != g.shape() {
                return Err(Error::data(format!("gradient shape mismatch for {name}")));
            }
            let rate = lr(name);
            let decay = 1.0 - rate * self.weight_decay;
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *w *= decay;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *w -= rate * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
            }
            if !p.is_finite() {
                return Err(Error::numerical(format!("parameter {name} became non-finite")));
            }
        }
        Ok(())
    }
}

/// Linear decay from 1 to 0 over `total` steps, no warmup.
pub fn linear_decay(step: usize, total: usize) -> f64 {
    if total == 0 {
        return 1.0;
    }
    (1.0 - step as f64 / total as f64).max(0.0)
}
