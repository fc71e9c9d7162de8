use serde::{Deserialize, Serialize};

use crate::diffcore::ParamVector;

use super::TrainError;

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    /// Steps of linear ramp from 0 to `lr`; 0 disables the ramp.
    #[serde(default)]
    pub warmup: i64,
    /// Decoupled decay, applied as `θ ← θ - lr·wd·θ`.
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "beta1")]
    pub beta1: f64,
    #[serde(default = "beta2")]
    pub beta2: f64,
    #[serde(default = "eps")]
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig { lr, warmup: 0, weight_decay: 0.0, beta1: beta1(), beta2: beta2(), eps: eps() }
    }

    pub fn with_warmup(mut self, warmup: i64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    /// Learning rate used on the given 1-based step.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup <= 0 {
            self.lr
        } else {
            self.lr * (step as f64 / self.warmup as f64).min(1.0)
        }
    }
}

/// Optimiser state; moments share the parameter layout.
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize) -> Self {
        Adam { cfg, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn update(&mut self, params: &mut ParamVector, grads: &ParamVector) -> Result<(), TrainError> {
        if !params.same_layout(grads) || params.len() != self.m.len() {
            return Err(TrainError::LayoutMismatch);
        }
        self.step += 1;
        let c = &self.cfg;
        let lr = c.lr_at(self.step);
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.values.iter_mut().zip(&grads.values).zip(&mut self.m).zip(&mut self.v) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            if c.weight_decay != 0.0 {
                *p -= lr * c.weight_decay * *p;
            }
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (vh.sqrt() + c.eps);
        }
        Ok(())
    }
}
