use serde::{Deserialize, Serialize};

use super::{TAU_MAX, TAU_MIN};
use crate::encoder::ContrastiveModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are kept per parameter tensor, in
/// [`ContrastiveModel::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new<F: Scalar>(config: AdamConfig, model: &ContrastiveModel<F>) -> Self {
        let zeros: Vec<Vec<f32>> = model.params().iter().map(|p| vec![0.0; p.data.len()]).collect();
        Adam { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// One update. An all-zero gradient is skipped entirely, so it never moves
    /// the parameters. `log_tau` is clamped to `[ln TAU_MIN, ln TAU_MAX]` afterwards.
    pub fn step<F: Scalar>(&mut self, model: &mut ContrastiveModel<F>, grads: &ContrastiveModel<F>) {
        let grads = grads.params();
        if grads.iter().all(|g| g.data.iter().all(|v| v.is_zero())) {
            return;
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, (_, param)) in model.params_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k].data);
            for i in 0..param.len() {
                let gi = g[i].as_f64();
                let mi = beta1 * m[i] as f64 + (1.0 - beta1) * gi;
                let vi = beta2 * v[i] as f64 + (1.0 - beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = learning_rate * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                param[i] = F::of(param[i].as_f64() - update);
            }
        }
        let lo = F::of(TAU_MIN.ln());
        let hi = F::of(TAU_MAX.ln());
        model.log_tau = model.log_tau.max(lo).min(hi);
    }
}
