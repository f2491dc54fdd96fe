//! Test objectives with a known optimal value.
//!
//! All randomness comes from [`rng`]: a ChaCha8 generator seeded with
//! `seed_from_u64(seed)` and switched to an integer stream, so data, teacher
//! weights and initial points never share a sequence.

mod coshsum;
mod least_squares;
mod mlp;
mod quadratic;

pub use coshsum::CoshSum;
pub use least_squares::{InterpLeastSquares, LsBatch};
pub use mlp::{Mlp, MlpShape};
pub use quadratic::Quadratic;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{ParamSet, ShapeSpec};
use crate::schedule::TheoreticalParams;

/// Deterministic generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub trait Objective: Send + Sync {
    fn shapes(&self) -> &ShapeSpec;

    fn loss(&self, x: &ParamSet) -> Result<f64>;

    fn grad(&self, x: &ParamSet) -> Result<ParamSet>;

    fn loss_and_grad(&self, x: &ParamSet) -> Result<(f64, ParamSet)> {
        Ok((self.loss(x)?, self.grad(x)?))
    }

    /// Infimum of the loss.
    fn f_star(&self) -> f64;

    fn x_star(&self) -> Option<&ParamSet> {
        None
    }

    /// Smoothness constants valid for this objective, when known in closed form.
    fn known_constants(&self) -> Option<TheoreticalParams> {
        None
    }

    fn check_shape(&self, x: &ParamSet) -> Result<()> {
        if x.conforms_to(self.shapes()) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "expected {:?}, got {:?}",
                self.shapes().layers(),
                x.shapes().layers()
            )))
        }
    }
}

/// An average of per-sample losses that all share the minimizer of the average.
pub trait StochasticObjective: Send + Sync {
    fn full(&self) -> &dyn Objective;

    /// The batch drawn for step `index` of a run seeded with `seed`.
    fn sample(&self, seed: u64, index: u64) -> Box<dyn Objective + '_>;
}

/// `(f_xi(x) - f_xi*, grad f_xi(x))` for the batch of step `index`.
pub fn batch_delta(
    sobj: &dyn StochasticObjective,
    x: &ParamSet,
    seed: u64,
    index: u64,
) -> Result<(f64, ParamSet)> {
    let batch = sobj.sample(seed, index);
    let (loss, grad) = batch.loss_and_grad(x)?;
    Ok(((loss - batch.f_star()).max(0.0), grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    Coshsum,
    InterpLs,
    Mlp,
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Vector dimension (quadratic, coshsum, interp_ls) or MLP input width.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Quadratic only: explicit layer shapes instead of a single vector.
    #[serde(default)]
    pub shapes: Option<ShapeSpec>,
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub n_data: Option<usize>,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Scale of the random initial point; the default depends on the kind.
    #[serde(default)]
    pub init_scale: Option<f64>,
    /// interp_ls only: samples per stochastic batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

impl ProblemConfig {
    pub fn new(kind: ProblemKind) -> Self {
        Self {
            kind,
            dim: None,
            shapes: None,
            hidden: None,
            n_data: None,
            n_samples: None,
            seed: 0,
            init_scale: None,
            batch_size: None,
        }
    }
}

const DEFAULT_DIM: usize = 10;
const DEFAULT_MLP_INPUT: usize = 8;
const DEFAULT_HIDDEN: usize = 32;
const DEFAULT_N_DATA: usize = 256;
const DEFAULT_N_SAMPLES: usize = 10;

/// A problem built from a [`ProblemConfig`].
pub enum Problem {
    Quadratic(Quadratic),
    Coshsum(CoshSum),
    InterpLs(InterpLeastSquares),
    Mlp(Mlp),
}

impl Problem {
    pub fn build(cfg: &ProblemConfig) -> Result<Problem> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("problem.{name} must be positive")))
            } else {
                Ok(v)
            }
        };
        let dim = positive("dim", cfg.dim.unwrap_or(DEFAULT_DIM))?;
        Ok(match cfg.kind {
            ProblemKind::Quadratic => {
                let shapes = match &cfg.shapes {
                    Some(s) => s.clone(),
                    None => ShapeSpec::vector(dim)?,
                };
                Problem::Quadratic(Quadratic::random(shapes, cfg.seed))
            }
            ProblemKind::Coshsum => Problem::Coshsum(CoshSum::new(dim)?),
            ProblemKind::InterpLs => {
                let n = positive("n_samples", cfg.n_samples.unwrap_or(DEFAULT_N_SAMPLES))?;
                let batch = positive("batch_size", cfg.batch_size.unwrap_or(1))?;
                Problem::InterpLs(InterpLeastSquares::random(n, dim, cfg.seed)?.with_batch_size(batch))
            }
            ProblemKind::Mlp => {
                let shape = MlpShape {
                    input: positive("dim", cfg.dim.unwrap_or(DEFAULT_MLP_INPUT))?,
                    hidden: positive("hidden", cfg.hidden.unwrap_or(DEFAULT_HIDDEN))?,
                };
                let n = positive("n_data", cfg.n_data.unwrap_or(DEFAULT_N_DATA))?;
                Problem::Mlp(Mlp::random(shape, n, cfg.seed)?)
            }
        })
    }

    pub fn objective(&self) -> &dyn Objective {
        match self {
            Problem::Quadratic(p) => p,
            Problem::Coshsum(p) => p,
            Problem::InterpLs(p) => p.full(),
            Problem::Mlp(p) => p,
        }
    }

    pub fn stochastic(&self) -> Option<&dyn StochasticObjective> {
        match self {
            Problem::InterpLs(p) => Some(p),
            _ => None,
        }
    }

    /// Initial point drawn from stream 100 of `seed`.
    pub fn initial_point(&self, seed: u64, init_scale: Option<f64>) -> ParamSet {
        let mut r = rng(seed, 100);
        match self {
            Problem::Quadratic(p) => p.initial_point(&mut r, init_scale.unwrap_or(1.0)),
            Problem::Coshsum(p) => p.initial_point(&mut r, init_scale.unwrap_or(2.0)),
            Problem::InterpLs(p) => p.initial_point(&mut r, init_scale.unwrap_or(0.0)),
            Problem::Mlp(p) => p.initial_point(&mut r, init_scale.unwrap_or(1.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: ProblemConfig = serde_json::from_str(r#"{"kind": "mlp", "hidden": 4}"#).unwrap();
        assert_eq!(ok.hidden, Some(4));
        assert!(serde_json::from_str::<ProblemConfig>(r#"{"kind": "mlp", "hiden": 4}"#).is_err());
        assert!(serde_json::from_str::<ProblemConfig>(r#"{"kind": "rosenbrock"}"#).is_err());
    }

    #[test]
    fn build_every_kind() {
        for kind in [
            ProblemKind::Quadratic,
            ProblemKind::Coshsum,
            ProblemKind::InterpLs,
            ProblemKind::Mlp,
        ] {
            let p = Problem::build(&ProblemConfig::new(kind)).unwrap();
            let x0 = p.initial_point(3, None);
            let f = p.objective().loss(&x0).unwrap();
            assert!(f >= p.objective().f_star());
            assert_eq!(p.stochastic().is_some(), kind == ProblemKind::InterpLs);
        }
    }
}
