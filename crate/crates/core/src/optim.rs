//! AdamW with decoupled weight decay and a linear-warmup learning-rate schedule.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// Constant after warmup.
    #[default]
    Constant,
    /// Linear decay to zero at the last step after warmup.
    Linear,
}

/// Learning rate for the 1-based optimizer step `step`.
pub fn learning_rate(
    base: f64,
    step: usize,
    warmup_steps: usize,
    schedule: LrSchedule,
    total_steps: usize,
) -> f64 {
    if warmup_steps > 0 && step <= warmup_steps {
        return base * step as f64 / warmup_steps as f64;
    }
    match schedule {
        LrSchedule::Constant => base,
        LrSchedule::Linear => {
            let span = total_steps.saturating_sub(warmup_steps).max(1) as f64;
            let left = total_steps.saturating_sub(step) as f64;
            base * (left / span).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<P> {
    config: AdamConfig,
    m: P,
    v: P,
    step: usize,
}

impl<P: ParamSet> AdamW<P> {
    pub fn new(params: &P, config: AdamConfig) -> Self {
        AdamW {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One update of every tensor accepted by `trainable`.
    pub fn step(&mut self, params: &mut P, grads: &P, lr: f64, trainable: impl Fn(&str) -> bool) {
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let grads = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((name, mut p), (_, g)), (_, mut m)), (_, mut v)) in
            params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs)
        {
            if !trainable(&name) {
                continue;
            }
            Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *p);
                });
        }
    }
}
