use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;
use crate::problems::ProblemConfig;
use crate::schedule::{DecayKind, TheoreticalParams, DEFAULT_CANDIDATES, DEFAULT_SIGMA_F2};

/// A complete experiment description, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub optimizer: OptimizerConfig,
    pub scheduler: SchedulerConfig,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preview: Option<PreviewConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Adaptive,
    Manual,
    Thm1,
    /// `thm1` step with the curvature bound frozen at its initial value.
    Thm1Frozen,
    Thm2,
    Thm3,
    Constant,
}

fn default_div() -> f64 {
    1.0
}

fn default_sigma_f2() -> f64 {
    DEFAULT_SIGMA_F2
}

fn default_candidates() -> usize {
    DEFAULT_CANDIDATES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    /// Peak learning rate (adaptive, manual, constant).
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default = "default_div")]
    pub div: f64,
    /// Target loss; defaults to the problem's optimal value.
    #[serde(default)]
    pub f_star: Option<f64>,
    #[serde(rename = "sigma_F2", default = "default_sigma_f2")]
    pub sigma_f2: f64,
    /// Horizon for the decay phase; defaults to `run.steps`.
    #[serde(default)]
    pub total_steps: Option<u64>,
    /// Manual only.
    #[serde(default)]
    pub warmup_steps: Option<u64>,
    #[serde(default)]
    pub decay: DecayKind,
    #[serde(default = "default_candidates")]
    pub n_candidates: usize,
    /// EMA factor for the loss fed to the adaptive scheduler.
    #[serde(default)]
    pub smoothing: Option<f64>,
    /// Adaptive only: fixed transition point instead of the matching search.
    #[serde(default)]
    pub delta_prime: Option<f64>,
    /// Smoothness constants for the theoretical schedules; defaults to the
    /// problem's closed-form constants.
    #[serde(default)]
    pub constants: Option<TheoreticalParams>,
    /// Distance bound `D`; defaults to `||x0 - x*||` in the optimizer norm.
    #[serde(default)]
    pub dist: Option<f64>,
}

impl SchedulerConfig {
    pub fn new(kind: SchedulerKind) -> Self {
        Self {
            kind,
            lr: None,
            div: 1.0,
            f_star: None,
            sigma_f2: DEFAULT_SIGMA_F2,
            total_steps: None,
            warmup_steps: None,
            decay: DecayKind::Cosine,
            n_candidates: DEFAULT_CANDIDATES,
            smoothing: None,
            delta_prime: None,
            constants: None,
            dist: None,
        }
    }

    pub fn with_lr(mut self, lr: f64, div: f64) -> Self {
        self.lr = Some(lr);
        self.div = div;
        self
    }

    pub(crate) fn require_lr(&self) -> Result<f64> {
        self.lr
            .ok_or_else(|| Error::Config(format!("scheduler.lr is required for {:?}", self.kind)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchIndexing {
    /// Step `t` draws batch `t`.
    #[default]
    Step,
    /// Step `t` draws batch `t mod n_samples`, so batches repeat every epoch.
    Cyclic,
}

fn default_eval_every() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Seeds the initial point and batch sampling; data come from `problem.seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub batch_indexing: BatchIndexing,
}

impl RunSection {
    pub fn new(steps: u64, seed: u64) -> Self {
        Self {
            steps,
            eval_every: 1,
            seed,
            batch_indexing: BatchIndexing::Step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreviewProfile {
    /// `delta0 * (1 - t / steps)`.
    Linear,
    /// `delta0 / (1 + t / tau)`.
    #[default]
    Inverse,
}

/// Synthetic gap trajectory for `schedule preview`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewConfig {
    /// Defaults to the gap at the problem's initial point.
    #[serde(default)]
    pub delta0: Option<f64>,
    #[serde(default)]
    pub profile: PreviewProfile,
    /// Defaults to `max(steps / 100, 1)`.
    #[serde(default)]
    pub tau: Option<f64>,
}

impl RunConfig {
    pub fn new(
        problem: ProblemConfig,
        optimizer: OptimizerConfig,
        scheduler: SchedulerConfig,
        run: RunSection,
    ) -> Self {
        Self {
            problem,
            optimizer,
            scheduler,
            run,
            preview: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scheduler;
        if self.run.steps == 0 {
            return Err(Error::Config("run.steps must be at least 1".into()));
        }
        if self.run.eval_every == 0 {
            return Err(Error::Config("run.eval_every must be at least 1".into()));
        }
        self.optimizer.validate()?;
        if !(s.div >= 1.0 && s.div.is_finite()) {
            return Err(Error::Config(format!("scheduler.div = {} must be >= 1", s.div)));
        }
        if let Some(lr) = s.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("scheduler.lr = {lr}")));
            }
        }
        if !(s.sigma_f2 > 0.0 && s.sigma_f2.is_finite()) {
            return Err(Error::Config(format!("scheduler.sigma_F2 = {}", s.sigma_f2)));
        }
        if s.n_candidates == 0 {
            return Err(Error::Config("scheduler.n_candidates must be positive".into()));
        }
        if let Some(b) = s.smoothing {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("scheduler.smoothing = {b} outside [0, 1)")));
            }
        }
        if let Some(d) = s.dist {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("scheduler.dist = {d}")));
            }
        }
        if let Some(p) = &s.constants {
            p.validate()?;
        }
        match s.kind {
            SchedulerKind::Adaptive | SchedulerKind::Constant => {
                s.require_lr()?;
            }
            SchedulerKind::Manual => {
                s.require_lr()?;
                let w = s.warmup_steps.ok_or_else(|| {
                    Error::Config("scheduler.warmup_steps is required for manual".into())
                })?;
                if w > self.total_steps() {
                    return Err(Error::Config(format!(
                        "warmup_steps = {w} exceeds total_steps = {}",
                        self.total_steps()
                    )));
                }
            }
            SchedulerKind::Thm2 => {
                if self.optimizer.weight_decay <= 0.0 {
                    return Err(Error::Config("thm2 requires optimizer.weight_decay > 0".into()));
                }
            }
            SchedulerKind::Thm1 | SchedulerKind::Thm1Frozen | SchedulerKind::Thm3 => {}
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.scheduler.total_steps.unwrap_or(self.run.steps)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
