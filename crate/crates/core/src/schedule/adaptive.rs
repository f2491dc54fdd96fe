//! Adaptive warm-up: follow the rational schedule while the suboptimality gap
//! stays above the transition point, then hand off to a classical decay for
//! the remaining steps.

use serde::{Deserialize, Serialize};

use super::decay::DecayKind;
use super::practical::{
    eta_practical, select_delta_prime, solve_coefficients, CoefficientSet, DEFAULT_CANDIDATES,
    DEFAULT_SIGMA_F2,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Decay,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Decay => "decay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub lr: f64,
    pub div: f64,
    pub f_star: f64,
    pub total_steps: u64,
    /// Worst-case Frobenius factor of the optimizer geometry.
    pub kappa: f64,
    pub sigma_f2: f64,
    pub decay: DecayKind,
    pub n_candidates: usize,
    /// EMA factor applied to the incoming loss; `None` feeds raw losses.
    pub smoothing: Option<f64>,
    /// Skips the transition-point search and uses this value instead.
    pub delta_prime: Option<f64>,
}

impl AdaptiveConfig {
    pub fn new(lr: f64, div: f64, f_star: f64, total_steps: u64, kappa: f64) -> Self {
        Self {
            lr,
            div,
            f_star,
            total_steps,
            kappa,
            sigma_f2: DEFAULT_SIGMA_F2,
            decay: DecayKind::Cosine,
            n_candidates: DEFAULT_CANDIDATES,
            smoothing: None,
            delta_prime: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayState {
    pub kind: DecayKind,
    pub step: u64,
    pub t_decay: u64,
    pub lr_start: f64,
}

impl DecayState {
    fn next(&mut self) -> f64 {
        let v = self.kind.value(self.step, self.t_decay, self.lr_start);
        self.step += 1;
        v
    }
}

/// Output of one scheduler call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrStep {
    pub lr: f64,
    /// Gap that drove this call, after smoothing and clamping.
    pub delta: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveScheduler {
    cfg: AdaptiveConfig,
    is_init: bool,
    is_decay: bool,
    warmup_steps: u64,
    coeffs: Option<CoefficientSet>,
    decay: Option<DecayState>,
    smoothed_loss: Option<f64>,
}

impl AdaptiveScheduler {
    pub fn new(cfg: AdaptiveConfig) -> Self {
        Self {
            cfg,
            is_init: false,
            is_decay: false,
            warmup_steps: 0,
            coeffs: None,
            decay: None,
            smoothed_loss: None,
        }
    }

    pub fn config(&self) -> &AdaptiveConfig {
        &self.cfg
    }

    pub fn is_init(&self) -> bool {
        self.is_init
    }

    pub fn is_decay(&self) -> bool {
        self.is_decay
    }

    pub fn warmup_steps(&self) -> u64 {
        self.warmup_steps
    }

    pub fn coefficients(&self) -> Option<&CoefficientSet> {
        self.coeffs.as_ref()
    }

    pub fn decay_state(&self) -> Option<&DecayState> {
        self.decay.as_ref()
    }

    fn initialize(&mut self, delta0: f64) -> Result<CoefficientSet> {
        if !(delta0 > 0.0) {
            return Err(Error::SchedulerInit(format!(
                "initial gap {delta0} is not positive (f* = {} is at or above the first loss)",
                self.cfg.f_star
            )));
        }
        let c = &self.cfg;
        let delta_prime = match c.delta_prime {
            Some(dp) => dp,
            None => select_delta_prime(c.lr, c.div, delta0, c.kappa, c.sigma_f2, c.n_candidates)?,
        };
        solve_coefficients(c.lr, c.div, delta0, delta_prime)
            .map_err(|e| Error::SchedulerInit(e.to_string()))
    }

    /// Learning rate for the step whose current training loss is `loss`.
    pub fn get_lr(&mut self, loss: f64) -> Result<LrStep> {
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss = {loss}")));
        }
        let loss = match self.cfg.smoothing {
            Some(beta) => {
                let s = self.smoothed_loss.map_or(loss, |s| beta * s + (1.0 - beta) * loss);
                self.smoothed_loss = Some(s);
                s
            }
            None => loss,
        };
        let raw = loss - self.cfg.f_star;

        if !self.is_init {
            let c = self.initialize(raw)?;
            self.coeffs = Some(c);
            self.is_init = true;
        }
        let c = self.coeffs.expect("initialized above");
        // Below f* the gap is treated as zero; above the first gap the
        // schedule stays at its floor.
        let delta = raw.clamp(0.0, c.delta0);

        if delta >= c.delta_prime && !self.is_decay {
            self.warmup_steps += 1;
            return Ok(LrStep {
                lr: eta_practical(delta, &c)?,
                delta,
                phase: Phase::Warmup,
            });
        }
        if !self.is_decay {
            self.is_decay = true;
            self.decay = Some(DecayState {
                kind: self.cfg.decay,
                step: 0,
                t_decay: self.cfg.total_steps.saturating_sub(self.warmup_steps),
                lr_start: c.lr,
            });
        }
        let lr = self.decay.as_mut().expect("decay initialized").next();
        Ok(LrStep {
            lr,
            delta,
            phase: Phase::Decay,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted() -> AdaptiveScheduler {
        let mut cfg = AdaptiveConfig::new(1e-3, 100.0, 3.2, 10, 11.0);
        cfg.delta_prime = Some(2.0);
        AdaptiveScheduler::new(cfg)
    }

    #[test]
    fn scripted_sequence() {
        let mut s = scripted();
        let first = s.get_lr(11.2).unwrap();
        assert!((first.lr - 1e-5).abs() < 1e-17);
        assert_eq!(first.phase, Phase::Warmup);
        let c = s.coefficients().unwrap();
        assert!((c.k0 - 88000.0).abs() < 1e-7);

        let peak = s.get_lr(5.2).unwrap();
        assert_eq!(peak.phase, Phase::Warmup);
        assert!((peak.lr - 1e-3).abs() < 1e-15);
        assert_eq!(s.warmup_steps(), 2);

        let d = s.get_lr(4.2).unwrap();
        assert_eq!(d.phase, Phase::Decay);
        assert_eq!(d.lr, 1e-3);
        assert_eq!(s.decay_state().unwrap().t_decay, 8);

        let again = s.get_lr(6.0).unwrap();
        assert_eq!(again.phase, Phase::Decay);
        assert_eq!(s.warmup_steps(), 2);
        assert!(again.lr < 1e-3);
    }

    #[test]
    fn f_star_above_loss_fails_init() {
        let mut cfg = AdaptiveConfig::new(1e-3, 10.0, 5.0, 10, 1.0);
        cfg.n_candidates = 10;
        let mut s = AdaptiveScheduler::new(cfg);
        assert!(matches!(s.get_lr(5.0), Err(Error::SchedulerInit(_))));
        assert!(!s.is_init());
    }
}
