use serde::{Deserialize, Serialize};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of one parameter block at step `iteration` (1-based).
pub fn adam_step(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], iteration: u64, cfg: &AdamConfig) {
    debug_assert!(iteration >= 1);
    debug_assert!(params.len() == grads.len() && m.len() == grads.len() && v.len() == grads.len());
    let t = iteration as i32;
    let c1 = 1.0 / (1.0 - cfg.beta1.powi(t));
    let c2 = 1.0 / (1.0 - cfg.beta2.powi(t));
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= cfg.learning_rate * (*m * c1) / ((*v * c2).sqrt() + cfg.epsilon);
    }
}

/// First and second moments for every parameter block of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub iteration: u64,
}

impl AdamState {
    pub fn new(block_sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = block_sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        AdamState { m, v, iteration: 0 }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, cfg: &AdamConfig) {
        assert_eq!(params.len(), self.m.len(), "parameter blocks changed");
        self.iteration += 1;
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            adam_step(p, g, m, v, self.iteration, cfg);
        }
    }
}
