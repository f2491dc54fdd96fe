use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayKind {
    #[default]
    Cosine,
    Linear,
}

impl DecayKind {
    pub fn value(self, step: u64, t_decay: u64, lr_start: f64) -> f64 {
        match self {
            DecayKind::Cosine => cosine_decay(step, t_decay, lr_start),
            DecayKind::Linear => linear_decay(step, t_decay, lr_start),
        }
    }
}

/// `lr_start * (1 + cos(pi * step / t_decay)) / 2`, reaching 0 at `t_decay`.
pub fn cosine_decay(step: u64, t_decay: u64, lr_start: f64) -> f64 {
    if t_decay == 0 {
        return 0.0;
    }
    let frac = step.min(t_decay) as f64 / t_decay as f64;
    0.5 * lr_start * (1.0 + (PI * frac).cos())
}

pub fn linear_decay(step: u64, t_decay: u64, lr_start: f64) -> f64 {
    if t_decay == 0 {
        return 0.0;
    }
    let frac = step.min(t_decay) as f64 / t_decay as f64;
    lr_start * (1.0 - frac)
}

/// Linear ramp from `lr / div` at step 0 to `lr` at `warmup_steps`.
pub fn linear_warmup(step: u64, warmup_steps: u64, lr: f64, div: f64) -> f64 {
    if warmup_steps == 0 || step >= warmup_steps {
        return lr;
    }
    let floor = lr / div;
    floor + (lr - floor) * step as f64 / warmup_steps as f64
}
