use rand::Rng;
use rand_distr::StandardNormal;

use super::{rng, Objective};
use crate::error::Result;
use crate::param::{Matrix, ParamSet, ShapeSpec};
use crate::schedule::TheoreticalParams;

/// `f(x) = ||x - x*||_F^2 / 2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    shapes: ShapeSpec,
    x_star: ParamSet,
}

pub(crate) fn gaussian(shapes: &ShapeSpec, r: &mut impl Rng, scale: f64) -> ParamSet {
    let layers = shapes
        .layers()
        .iter()
        .map(|&(m, n)| Matrix::from_fn(m, n, |_, _| scale * r.sample::<f64, _>(StandardNormal)))
        .collect();
    ParamSet::new(layers).expect("finite gaussian draw")
}

impl Quadratic {
    pub fn new(x_star: ParamSet) -> Self {
        Self {
            shapes: x_star.shapes(),
            x_star,
        }
    }

    /// Minimizer drawn from a standard normal on stream 1 of `seed`.
    pub fn random(shapes: ShapeSpec, seed: u64) -> Self {
        let x_star = gaussian(&shapes, &mut rng(seed, 1), 1.0);
        Self { shapes, x_star }
    }

    pub(crate) fn initial_point(&self, r: &mut impl Rng, scale: f64) -> ParamSet {
        let noise = gaussian(&self.shapes, r, scale);
        self.x_star.add_scaled(&noise, 1.0).expect("same shapes")
    }
}

impl Objective for Quadratic {
    fn shapes(&self) -> &ShapeSpec {
        &self.shapes
    }

    fn loss(&self, x: &ParamSet) -> Result<f64> {
        self.check_shape(x)?;
        let d = x.sub(&self.x_star)?.frobenius_norm();
        Ok(0.5 * d * d)
    }

    fn grad(&self, x: &ParamSet) -> Result<ParamSet> {
        self.check_shape(x)?;
        x.sub(&self.x_star)
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn x_star(&self) -> Option<&ParamSet> {
        Some(&self.x_star)
    }

    fn known_constants(&self) -> Option<TheoreticalParams> {
        Some(TheoreticalParams::new(2.0, 1.0, 0.0, 0.0))
    }
}
