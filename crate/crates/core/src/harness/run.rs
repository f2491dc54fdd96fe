use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{BatchIndexing, RunConfig};
use super::policy::{Policy, RunContext};
use crate::diagnostics::{smoothness_ratio, SmoothnessSample};
use crate::error::{Error, Result};
use crate::geometry::{dual_norm, kappa, primal_norm};
use crate::optim::{optimizer_step, OptimizerState};
use crate::param::ParamSet;
use crate::problems::{Objective, Problem, StochasticObjective};
use crate::schedule::{CoefficientSet, Phase};

/// Losses above this (or non-finite) end a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    /// Full-objective loss at the current iterate.
    pub loss: f64,
    /// Gap that drove the scheduler (per batch for stochastic problems).
    pub delta: f64,
    pub lr: f64,
    pub dual_grad_norm: f64,
    pub dist_to_opt: Option<f64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Diverged { step: u64 },
    Error { step: u64, error: String, message: String },
}

impl Outcome {
    pub fn label(&self) -> &str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Diverged { .. } => "diverged",
            Outcome::Error { error, .. } => error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config_hash: String,
    pub seed: u64,
    pub kappa: f64,
    pub coefficients: Option<CoefficientSet>,
    pub delta_prime: Option<f64>,
    pub warmup_steps: u64,
    pub steps_completed: u64,
    /// Training loss after the last step; `+inf` unless the run completed.
    pub final_loss: f64,
    /// Largest scheduler gap seen during the run.
    pub max_delta: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub header: TraceHeader,
    pub rows: Vec<TraceRow>,
    /// Same-batch smoothness ratios, collected when requested.
    pub samples: Vec<(u64, SmoothnessSample)>,
}

impl RunTrace {
    pub fn completed(&self) -> bool {
        self.header.outcome == Outcome::Completed
    }

    /// Rows as CSV: `step,loss,delta,lr,dual_grad_norm,dist_to_opt,phase`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        out.write_record([
            "step",
            "loss",
            "delta",
            "lr",
            "dual_grad_norm",
            "dist_to_opt",
            "phase",
        ])
        .map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.delta.to_string(),
                r.lr.to_string(),
                r.dual_grad_norm.to_string(),
                r.dist_to_opt.map(|d| d.to_string()).unwrap_or_default(),
                r.phase.as_str().to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }
}

/// Options that change what is recorded, not the optimization itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record the smoothness ratio between consecutive iterates, using an
    /// extra gradient evaluation on the same batch.
    pub collect_ratios: bool,
}

pub fn run_training(cfg: &RunConfig) -> Result<RunTrace> {
    run_training_with(cfg, RunOptions::default())
}

pub fn run_training_with(cfg: &RunConfig, opts: RunOptions) -> Result<RunTrace> {
    cfg.validate()?;
    let problem = Problem::build(&cfg.problem)?;
    let x0 = problem.initial_point(cfg.run.seed, cfg.problem.init_scale);
    run_on(problem.objective(), problem.stochastic(), x0, cfg, opts)
}

/// Runs the configured optimizer and schedule on an explicit objective.
/// With `stochastic` set, gradients and scheduler inputs come from its
/// batches while `obj` supplies the recorded loss.
pub fn run_on(
    obj: &dyn Objective,
    stochastic: Option<&dyn StochasticObjective>,
    x0: ParamSet,
    cfg: &RunConfig,
    opts: RunOptions,
) -> Result<RunTrace> {
    cfg.validate()?;
    obj.check_shape(&x0)?;
    let shapes = obj.shapes().clone();
    let geom = cfg.optimizer.resolved_geometry(&shapes)?;
    let x_star = obj.x_star().cloned();
    let dist_to = |x: &ParamSet| -> Result<Option<f64>> {
        x_star
            .as_ref()
            .map(|xs| primal_norm(&x.sub(xs)?, &geom))
            .transpose()
    };
    let ctx = RunContext {
        kappa: kappa(&shapes, &geom)?,
        f_star: obj.f_star(),
        dist0: dist_to(&x0)?,
        x0_norm: primal_norm(&x0, &geom)?,
        x_star_norm: x_star.as_ref().map(|xs| primal_norm(xs, &geom)).transpose()?,
        constants: obj.known_constants(),
    };
    let mut policy = Policy::new(cfg, &ctx)?;

    let steps = cfg.run.steps;
    let mut x = x0;
    let mut state = OptimizerState::new(&shapes);
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut max_delta = 0.0_f64;
    let mut outcome = Outcome::Completed;
    let mut completed = 0;
    let fail = |step: u64, e: Error| Outcome::Error {
        step,
        error: e.kind_name().to_string(),
        message: e.to_string(),
    };

    for t in 0..steps {
        let batch = stochastic.map(|s| {
            let index = match cfg.run.batch_indexing {
                BatchIndexing::Step => t,
                BatchIndexing::Cyclic => t % cfg.problem.n_samples.unwrap_or(1).max(1) as u64,
            };
            s.sample(cfg.run.seed, index)
        });
        let target: &dyn Objective = batch.as_deref().unwrap_or(obj);
        let (target_loss, g) = target.loss_and_grad(&x)?;
        let loss = if batch.is_some() { obj.loss(&x)? } else { target_loss };
        if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD {
            outcome = Outcome::Diverged { step: t };
            break;
        }
        let lr = match policy.next(t, target_loss, target.f_star(), target.known_constants()) {
            Ok(v) => v,
            Err(e) => {
                outcome = fail(t, e);
                break;
            }
        };
        max_delta = max_delta.max(lr.delta);
        if t % cfg.run.eval_every == 0 || t + 1 == steps {
            rows.push(TraceRow {
                step: t,
                loss,
                delta: lr.delta,
                lr: lr.lr,
                dual_grad_norm: dual_norm(&g, &geom)?,
                dist_to_opt: dist_to(&x)?,
                phase: lr.phase,
            });
        }
        let (x_new, st) = match optimizer_step(&cfg.optimizer, &state, &x, &g, lr.lr) {
            Ok(v) => v,
            Err(e) => {
                outcome = fail(t, e);
                break;
            }
        };
        if opts.collect_ratios && x_new != x {
            let ratio = smoothness_ratio(target, &x, &x_new, &geom)?;
            let delta = (target_loss - target.f_star()).max(0.0);
            samples.push((t, SmoothnessSample { delta, ratio }));
        }
        x = x_new;
        state = st;
        completed = t + 1;
    }

    let mut final_loss = f64::INFINITY;
    if outcome == Outcome::Completed {
        let f = obj.loss(&x)?;
        if f.is_finite() && f <= DIVERGENCE_THRESHOLD {
            final_loss = f;
        } else {
            outcome = Outcome::Diverged { step: steps };
        }
    }
    let warmup_steps = match &policy {
        Policy::Adaptive(s) => s.warmup_steps(),
        _ => rows.iter().filter(|r| r.phase == Phase::Warmup).count() as u64,
    };
    Ok(RunTrace {
        header: TraceHeader {
            config_hash: cfg.hash(),
            seed: cfg.run.seed,
            kappa: ctx.kappa,
            coefficients: policy.coefficients(),
            delta_prime: policy.delta_prime(),
            warmup_steps,
            steps_completed: completed,
            final_loss,
            max_delta,
            outcome,
        },
        rows,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::harness::config::{RunSection, SchedulerConfig, SchedulerKind};
    use crate::optim::{OptimizerConfig, OptimizerKind};
    use crate::param::ShapeSpec;
    use crate::problems::{ProblemConfig, ProblemKind, Quadratic};
    use crate::schedule::TheoreticalParams;

    struct Counting {
        inner: Quadratic,
        calls: AtomicUsize,
    }

    impl Objective for Counting {
        fn shapes(&self) -> &ShapeSpec {
            self.inner.shapes()
        }
        fn loss(&self, x: &ParamSet) -> Result<f64> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.inner.loss(x)
        }
        fn grad(&self, x: &ParamSet) -> Result<ParamSet> {
            self.inner.grad(x)
        }
        fn f_star(&self) -> f64 {
            0.0
        }
        fn x_star(&self) -> Option<&ParamSet> {
            self.inner.x_star()
        }
        fn known_constants(&self) -> Option<TheoreticalParams> {
            self.inner.known_constants()
        }
    }

    fn quadratic_cfg(kind: SchedulerKind, steps: u64) -> RunConfig {
        let mut s = SchedulerConfig::new(kind);
        s.lr = Some(0.1);
        RunConfig::new(
            ProblemConfig::new(ProblemKind::Quadratic),
            OptimizerConfig::new(OptimizerKind::NormSgd),
            s,
            RunSection::new(steps, 3),
        )
    }

    #[test]
    fn single_step_uses_two_loss_evaluations() {
        let obj = Counting {
            inner: Quadratic::new(ParamSet::from_column(&[1.0, -1.0])),
            calls: AtomicUsize::new(0),
        };
        let cfg = quadratic_cfg(SchedulerKind::Constant, 1);
        let x0 = ParamSet::from_column(&[0.0, 0.0]);
        let trace = run_on(&obj, None, x0, &cfg, RunOptions::default()).unwrap();
        assert_eq!(obj.calls.load(Ordering::Relaxed), 2);
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.header.steps_completed, 1);
        assert!(trace.completed());
    }

    #[test]
    fn deterministic_csv() {
        let cfg = quadratic_cfg(SchedulerKind::Adaptive, 50);
        let body = |t: &RunTrace| {
            let mut v = Vec::new();
            t.write_csv(&mut v).unwrap();
            v
        };
        let a = run_training(&cfg).unwrap();
        let b = run_training(&cfg).unwrap();
        assert_eq!(body(&a), body(&b));
        assert_eq!(a.header, b.header);
        let text = String::from_utf8(body(&a)).unwrap();
        assert!(text.starts_with("step,loss,delta,lr,dual_grad_norm,dist_to_opt,phase\n0,"));
    }

    #[test]
    fn phase_accounting() {
        let cfg = quadratic_cfg(SchedulerKind::Adaptive, 200);
        let t = run_training(&cfg).unwrap();
        let warm = t.rows.iter().filter(|r| r.phase == Phase::Warmup).count() as u64;
        assert_eq!(warm, t.header.warmup_steps);
        assert_eq!(t.rows.len() as u64, 200);
        let first_decay = t.rows.iter().position(|r| r.phase == Phase::Decay);
        if let Some(i) = first_decay {
            assert!(t.rows[i..].iter().all(|r| r.phase == Phase::Decay));
            assert_eq!(t.rows[i].lr, 0.1);
        }
    }

    #[test]
    fn scheduler_failure_is_recorded() {
        let mut cfg = quadratic_cfg(SchedulerKind::Adaptive, 10);
        cfg.scheduler.f_star = Some(1e9);
        let t = run_training(&cfg).unwrap();
        assert_eq!(t.header.outcome.label(), "SchedulerInitError");
        assert!(t.rows.is_empty());
        assert_eq!(t.header.final_loss, f64::INFINITY);
    }

    #[test]
    fn divergence_is_recorded() {
        let mut cfg = quadratic_cfg(SchedulerKind::Constant, 20);
        cfg.scheduler.lr = Some(1e7);
        let t = run_training(&cfg).unwrap();
        assert!(matches!(t.header.outcome, Outcome::Diverged { step: 1 }));
    }
}
