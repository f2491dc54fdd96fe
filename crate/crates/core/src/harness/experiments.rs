use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PreviewProfile, RunConfig, SchedulerKind};
use super::policy::{Policy, RunContext};
use super::run::{run_training, run_training_with, RunOptions, RunTrace};
use crate::diagnostics::{fit_quadratic, QuadraticFit, SmoothnessSample};
use crate::error::{Error, Result};
use crate::geometry::{kappa, primal_norm};
use crate::problems::Problem;
use crate::schedule::Phase;

/// Environment variable capping the number of parallel runs.
pub const THREADS_ENV: &str = "WARMUPLAB_THREADS";

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn write_table<W: Write>(w: W, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for r in rows {
        out.write_record(r).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

/// Runs `f` over `items` on a pool capped by [`THREADS_ENV`], preserving order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} = {v:?} is not an integer")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSchedule {
    Manual,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub schedule: SweepSchedule,
    /// Configured length for manual rows, consumed length for the adaptive row.
    pub warmup_steps: u64,
    /// Final training loss; `+inf` for failed or diverged runs.
    pub final_loss: f64,
    pub status: String,
}

/// One manual run per warm-up length plus one adaptive run, all sharing the
/// problem, optimizer, peak learning rate and `div` of `cfg`.
pub fn run_sweep(cfg: &RunConfig, warmup_lengths: &[u64]) -> Result<Vec<SweepRow>> {
    let mut jobs: Vec<(SweepSchedule, RunConfig)> = Vec::new();
    for &w in warmup_lengths {
        let mut c = cfg.clone();
        c.scheduler.kind = SchedulerKind::Manual;
        c.scheduler.warmup_steps = Some(w);
        c.validate()?;
        jobs.push((SweepSchedule::Manual, c));
    }
    let mut c = cfg.clone();
    c.scheduler.kind = SchedulerKind::Adaptive;
    c.scheduler.warmup_steps = None;
    c.validate()?;
    jobs.push((SweepSchedule::Adaptive, c));

    let rows = par_map(&jobs, |(kind, c)| {
        let configured = c.scheduler.warmup_steps;
        match run_training(c) {
            Ok(t) => SweepRow {
                schedule: *kind,
                warmup_steps: configured.unwrap_or(t.header.warmup_steps),
                final_loss: t.header.final_loss,
                status: t.header.outcome.label().to_string(),
            },
            Err(e) => SweepRow {
                schedule: *kind,
                warmup_steps: configured.unwrap_or(0),
                final_loss: f64::INFINITY,
                status: e.kind_name().to_string(),
            },
        }
    })?;
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                match r.schedule {
                    SweepSchedule::Manual => "manual".to_string(),
                    SweepSchedule::Adaptive => "adaptive".to_string(),
                },
                r.warmup_steps.to_string(),
                r.final_loss.to_string(),
                r.status.clone(),
            ]
        })
        .collect();
    write_table(w, &["schedule", "warmup_steps", "final_loss", "status"], body)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub f_star: f64,
    pub final_loss: f64,
    pub warmup_steps: u64,
    pub status: String,
    pub message: String,
}

/// Gap between the loss at the configured initial point and the problem's
/// optimal value.
pub fn initial_gap(cfg: &RunConfig) -> Result<f64> {
    let problem = Problem::build(&cfg.problem)?;
    let x0 = problem.initial_point(cfg.run.seed, cfg.problem.init_scale);
    let obj = problem.objective();
    Ok(obj.loss(&x0)? - obj.f_star())
}

/// One adaptive run per target value. The problem's true optimum is added
/// when it is not already among `fstar_values`.
pub fn run_fstar_ablation(cfg: &RunConfig, fstar_values: &[f64]) -> Result<Vec<AblationRow>> {
    let optimum = Problem::build(&cfg.problem)?.objective().f_star();
    let mut values = fstar_values.to_vec();
    if !values.contains(&optimum) {
        values.insert(0, optimum);
    }
    let mut jobs = Vec::new();
    for v in values {
        let mut c = cfg.clone();
        c.scheduler.kind = SchedulerKind::Adaptive;
        c.scheduler.warmup_steps = None;
        c.scheduler.f_star = Some(v);
        c.validate()?;
        jobs.push((v, c));
    }
    par_map(&jobs, |(v, c)| match run_training(c) {
        Ok(t) => {
            let message = match &t.header.outcome {
                super::run::Outcome::Error { message, .. } => message.clone(),
                _ => String::new(),
            };
            AblationRow {
                f_star: *v,
                final_loss: t.header.final_loss,
                warmup_steps: t.header.warmup_steps,
                status: t.header.outcome.label().to_string(),
                message,
            }
        }
        Err(e) => AblationRow {
            f_star: *v,
            final_loss: f64::INFINITY,
            warmup_steps: 0,
            status: e.kind_name().to_string(),
            message: e.to_string(),
        },
    })
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], w: W) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.f_star.to_string(),
                r.final_loss.to_string(),
                r.warmup_steps.to_string(),
                r.status.clone(),
                r.message.clone(),
            ]
        })
        .collect();
    write_table(
        w,
        &["f_star", "final_loss", "warmup_steps", "status", "message"],
        body,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub geometry: String,
    pub samples: Vec<(u64, SmoothnessSample)>,
    pub fit: Result<QuadraticFit>,
    pub trace: RunTrace,
}

/// Trains with `cfg` while recording the same-batch smoothness ratio at
/// every step, then fits `K0 + K1 D + K2 D^2` over the whole trace.
pub fn diagnose(cfg: &RunConfig) -> Result<Diagnosis> {
    let problem = Problem::build(&cfg.problem)?;
    let geometry = cfg
        .optimizer
        .resolved_geometry(problem.objective().shapes())?
        .name()
        .to_string();
    let trace = run_training_with(
        cfg,
        RunOptions {
            collect_ratios: true,
        },
    )?;
    let samples = trace.samples.clone();
    let plain: Vec<SmoothnessSample> = samples.iter().map(|(_, s)| *s).collect();
    Ok(Diagnosis {
        geometry,
        fit: fit_quadratic(&plain),
        samples,
        trace,
    })
}

pub fn write_diagnosis_csv<W: Write>(d: &Diagnosis, w: W) -> Result<()> {
    let body = d
        .samples
        .iter()
        .map(|(t, s)| {
            vec![
                t.to_string(),
                s.delta.to_string(),
                s.ratio.to_string(),
                d.geometry.clone(),
            ]
        })
        .collect();
    write_table(w, &["step", "delta", "ratio", "geometry"], body)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewRow {
    pub step: u64,
    pub delta: f64,
    pub lr: f64,
    pub phase: Phase,
}

/// Feeds the configured scheduler a synthetic gap trajectory, without
/// training.
pub fn schedule_preview(cfg: &RunConfig) -> Result<Vec<PreviewRow>> {
    cfg.validate()?;
    let problem = Problem::build(&cfg.problem)?;
    let obj = problem.objective();
    let x0 = problem.initial_point(cfg.run.seed, cfg.problem.init_scale);
    let shapes = obj.shapes().clone();
    let geom = cfg.optimizer.resolved_geometry(&shapes)?;
    let x_star = obj.x_star();
    let ctx = RunContext {
        kappa: kappa(&shapes, &geom)?,
        f_star: obj.f_star(),
        dist0: x_star.map(|xs| primal_norm(&x0.sub(xs)?, &geom)).transpose()?,
        x0_norm: primal_norm(&x0, &geom)?,
        x_star_norm: x_star.map(|xs| primal_norm(xs, &geom)).transpose()?,
        constants: obj.known_constants(),
    };
    let mut policy = Policy::new(cfg, &ctx)?;

    let preview = cfg.preview.clone().unwrap_or(super::config::PreviewConfig {
        delta0: None,
        profile: PreviewProfile::Inverse,
        tau: None,
    });
    let steps = cfg.run.steps;
    let delta0 = match preview.delta0 {
        Some(d) => d,
        None => obj.loss(&x0)? - obj.f_star(),
    };
    let tau = preview.tau.unwrap_or((steps as f64 / 100.0).max(1.0));
    let mut rows = Vec::with_capacity(steps as usize);
    for t in 0..steps {
        let delta = match preview.profile {
            PreviewProfile::Linear => delta0 * (1.0 - t as f64 / steps as f64),
            PreviewProfile::Inverse => delta0 / (1.0 + t as f64 / tau),
        };
        let lr = policy.next(t, obj.f_star() + delta, obj.f_star(), ctx.constants)?;
        rows.push(PreviewRow {
            step: t,
            delta: lr.delta,
            lr: lr.lr,
            phase: lr.phase,
        });
    }
    Ok(rows)
}

pub fn write_preview_csv<W: Write>(rows: &[PreviewRow], w: W) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                r.delta.to_string(),
                r.lr.to_string(),
                r.phase.as_str().to_string(),
            ]
        })
        .collect();
    write_table(w, &["step", "delta", "lr", "phase"], body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{RunSection, SchedulerConfig};
    use crate::optim::{OptimizerConfig, OptimizerKind};
    use crate::problems::{ProblemConfig, ProblemKind};

    fn cfg(kind: SchedulerKind) -> RunConfig {
        RunConfig::new(
            ProblemConfig::new(ProblemKind::Quadratic),
            OptimizerConfig::new(OptimizerKind::NormSgd),
            SchedulerConfig::new(kind).with_lr(0.05, 10.0),
            RunSection::new(300, 1),
        )
    }

    #[test]
    fn zero_warmup_matches_plain_decay() {
        let rows = run_sweep(&cfg(SchedulerKind::Constant), &[0, 20]).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].schedule, SweepSchedule::Adaptive);

        let mut manual = cfg(SchedulerKind::Manual);
        manual.scheduler.warmup_steps = Some(0);
        let plain = run_training(&manual).unwrap();
        assert_eq!(rows[0].final_loss, plain.header.final_loss);
        assert!(plain.rows.iter().all(|r| r.phase == Phase::Decay));
        assert_eq!(plain.rows[0].lr, 0.05);

        let adaptive = run_training(&cfg(SchedulerKind::Adaptive)).unwrap();
        assert_eq!(rows[2].warmup_steps, adaptive.header.warmup_steps);
        assert_eq!(rows[2].final_loss, adaptive.header.final_loss);
    }

    #[test]
    fn ablation_records_init_failure() {
        let c = cfg(SchedulerKind::Adaptive);
        let d0 = initial_gap(&c).unwrap();
        let rows = run_fstar_ablation(&c, &[0.1 * d0, 2.0 * d0]).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].f_star, 0.0);
        assert_eq!(rows[0].status, "completed");
        assert_eq!(rows[2].status, "SchedulerInitError");
        assert_eq!(rows[2].final_loss, f64::INFINITY);
    }

    #[test]
    fn preview_shape() {
        let mut c = cfg(SchedulerKind::Adaptive);
        c.preview = Some(super::super::config::PreviewConfig {
            delta0: Some(8.0),
            profile: PreviewProfile::Linear,
            tau: None,
        });
        let rows = schedule_preview(&c).unwrap();
        assert_eq!(rows.len(), 300);
        assert!((rows[0].lr - 0.005).abs() < 1e-12);
        let peak = rows
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.lr.total_cmp(&b.1.lr))
            .unwrap()
            .0;
        assert!(rows[..peak].windows(2).all(|w| w[0].lr <= w[1].lr));
        assert!(rows[peak..].windows(2).all(|w| w[0].lr >= w[1].lr));
    }

    #[test]
    fn diagnose_quadratic_ratio_is_one() {
        let mut c = cfg(SchedulerKind::Constant);
        c.run.steps = 20;
        let d = diagnose(&c).unwrap();
        assert_eq!(d.geometry, "euclidean");
        assert_eq!(d.samples.len(), 20);
        assert!(d.samples.iter().all(|(_, s)| (s.ratio - 1.0).abs() < 1e-9));
    }
}
