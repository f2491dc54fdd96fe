use super::config::{RunConfig, SchedulerKind};
use crate::error::{Error, Result};
use crate::schedule::{
    eta_thm1, eta_thm2, eta_thm3, lambda_admissible, lambda_max, linear_warmup, transition_point,
    AdaptiveConfig, AdaptiveScheduler, CoefficientSet, DecayKind, LrStep, Phase,
    TheoreticalParams,
};

/// Quantities fixed at the start of a run that the schedules may need.
pub(crate) struct RunContext {
    pub kappa: f64,
    pub f_star: f64,
    /// `||x0 - x*||` in the optimizer norm, when `x*` is known.
    pub dist0: Option<f64>,
    pub x0_norm: f64,
    pub x_star_norm: Option<f64>,
    pub constants: Option<TheoreticalParams>,
}

#[derive(Debug, Clone)]
pub(crate) enum Theory {
    Thm1,
    Frozen { curvature: Option<f64> },
    Thm2 { lambda: f64 },
    Thm3,
}

/// Learning-rate source for one run.
#[derive(Debug, Clone)]
pub(crate) enum Policy {
    Adaptive(Box<AdaptiveScheduler>),
    Manual {
        lr: f64,
        div: f64,
        warmup: u64,
        total: u64,
        decay: DecayKind,
    },
    Constant(f64),
    Theory {
        rule: Theory,
        constants: Option<TheoreticalParams>,
        dist: f64,
    },
}

fn theory_constants(
    configured: Option<TheoreticalParams>,
    ctx: &RunContext,
) -> Result<Option<TheoreticalParams>> {
    let p = configured.or(ctx.constants);
    if let Some(p) = &p {
        p.validate()?;
    }
    Ok(p)
}

impl Policy {
    pub fn new(cfg: &RunConfig, ctx: &RunContext) -> Result<Self> {
        let s = &cfg.scheduler;
        let total = cfg.total_steps();
        let dist = || {
            s.dist.or(ctx.dist0).filter(|d| *d > 0.0).ok_or_else(|| {
                Error::Config(
                    "scheduler.dist is required when x* is unknown or equals x0".into(),
                )
            })
        };
        let fixed_constants = || {
            theory_constants(s.constants, ctx)?.ok_or_else(|| {
                Error::Config("scheduler.constants is required for this problem".into())
            })
        };
        Ok(match s.kind {
            SchedulerKind::Adaptive => {
                let mut a = AdaptiveConfig::new(
                    s.require_lr()?,
                    s.div,
                    s.f_star.unwrap_or(ctx.f_star),
                    total,
                    ctx.kappa,
                );
                a.sigma_f2 = s.sigma_f2;
                a.decay = s.decay;
                a.n_candidates = s.n_candidates;
                a.smoothing = s.smoothing;
                a.delta_prime = s.delta_prime;
                Policy::Adaptive(Box::new(AdaptiveScheduler::new(a)))
            }
            SchedulerKind::Manual => Policy::Manual {
                lr: s.require_lr()?,
                div: s.div,
                warmup: s.warmup_steps.unwrap_or(0),
                total,
                decay: s.decay,
            },
            SchedulerKind::Constant => Policy::Constant(s.require_lr()?),
            SchedulerKind::Thm1 => Policy::Theory {
                rule: Theory::Thm1,
                constants: Some(fixed_constants()?),
                dist: dist()?,
            },
            SchedulerKind::Thm1Frozen => Policy::Theory {
                rule: Theory::Frozen { curvature: None },
                constants: Some(fixed_constants()?),
                dist: dist()?,
            },
            SchedulerKind::Thm2 => {
                let p = fixed_constants()?;
                let lambda = cfg.optimizer.weight_decay;
                let lmax = lambda_max(&p)?;
                let xs = ctx.x_star_norm.ok_or_else(|| {
                    Error::Config("thm2 needs a problem with known x*".into())
                })?;
                if !lambda_admissible(lambda, ctx.x0_norm, xs, lmax) {
                    return Err(Error::Config(format!(
                        "weight_decay = {lambda} is not admissible: bound is 1 / max({}, {xs}, 1 / {lmax})",
                        ctx.x0_norm
                    )));
                }
                Policy::Theory {
                    rule: Theory::Thm2 { lambda },
                    constants: Some(p),
                    // unused by the weight-decay rule
                    dist: 1.0,
                }
            }
            SchedulerKind::Thm3 => Policy::Theory {
                rule: Theory::Thm3,
                constants: theory_constants(s.constants, ctx)?,
                dist: dist()?,
            },
        })
    }

    /// Learning rate for step `t`, given the loss of the objective the
    /// gradient comes from, its optimal value, and its constants.
    pub fn next(
        &mut self,
        t: u64,
        loss: f64,
        f_star: f64,
        local_constants: Option<TheoreticalParams>,
    ) -> Result<LrStep> {
        match self {
            Policy::Adaptive(s) => s.get_lr(loss),
            Policy::Manual {
                lr,
                div,
                warmup,
                total,
                decay,
            } => {
                let delta = (loss - f_star).max(0.0);
                Ok(if t < *warmup {
                    LrStep {
                        lr: linear_warmup(t, *warmup, *lr, *div),
                        delta,
                        phase: Phase::Warmup,
                    }
                } else {
                    LrStep {
                        lr: decay.value(t - *warmup, *total - *warmup, *lr),
                        delta,
                        phase: Phase::Decay,
                    }
                })
            }
            Policy::Constant(lr) => Ok(LrStep {
                lr: *lr,
                delta: (loss - f_star).max(0.0),
                phase: Phase::Decay,
            }),
            Policy::Theory {
                rule,
                constants,
                dist,
            } => {
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!("loss = {loss}")));
                }
                let delta = (loss - f_star).max(0.0);
                let p = match rule {
                    Theory::Thm3 => local_constants.or(*constants),
                    _ => *constants,
                }
                .ok_or_else(|| Error::Config("no smoothness constants for thm3".into()))?;
                let lr = match rule {
                    Theory::Thm1 => eta_thm1(delta, &p, *dist)?,
                    Theory::Thm3 => eta_thm3(delta, *dist, &p)?,
                    Theory::Thm2 { lambda } => eta_thm2(delta, &p, *lambda)?,
                    Theory::Frozen { curvature } => {
                        let k = *curvature.get_or_insert_with(|| p.curvature(delta));
                        delta / (*dist * k)
                    }
                };
                let warm = match rule {
                    Theory::Frozen { .. } => false,
                    _ => p.rho > 1.0 && delta >= transition_point(p.k0, p.krho, p.rho)?,
                };
                Ok(LrStep {
                    lr,
                    delta,
                    phase: if warm { Phase::Warmup } else { Phase::Decay },
                })
            }
        }
    }

    pub fn coefficients(&self) -> Option<CoefficientSet> {
        match self {
            Policy::Adaptive(s) => s.coefficients().copied(),
            _ => None,
        }
    }

    /// Transition point of the schedule, when it has one.
    pub fn delta_prime(&self) -> Option<f64> {
        match self {
            Policy::Adaptive(s) => s.coefficients().map(|c| c.delta_prime),
            Policy::Theory {
                rule: Theory::Thm1 | Theory::Thm2 { .. } | Theory::Thm3,
                constants: Some(p),
                ..
            } if p.rho > 1.0 => transition_point(p.k0, p.krho, p.rho).ok(),
            _ => None,
        }
    }
}
