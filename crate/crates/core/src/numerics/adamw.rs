use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.05,
        }
    }
}

/// AdamW with decoupled weight decay and bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    /// Zero-initialized moments for every parameter currently in `store`.
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        AdamW {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, id: ParamId) -> &[f64] {
        &self.first[id.0]
    }

    /// Applies one update to every parameter in `ids` from its stored
    /// gradient, at learning rate `lr`.
    pub fn step(&mut self, store: &mut ParamStore, ids: &[ParamId], lr: f64) -> Result<()> {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for &id in ids {
            let tensor = store.get_mut(id);
            let n = tensor.len();
            let (m, v) = (&mut self.first[id.0], &mut self.second[id.0]);
            if m.len() != n {
                return Err(Error::shape("adamw_step", tensor.shape(), &[m.len()]));
            }
            let grad = match tensor.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; n],
            };
            for (((p, g), mi), vi) in tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * c.weight_decay * *p;
                *p -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }

    /// Resizes the moment buffers of one parameter after its shape changed.
    pub fn reset_param(&mut self, id: ParamId, len: usize) {
        self.first[id.0] = vec![0.0; len];
        self.second[id.0] = vec![0.0; len];
    }
}
