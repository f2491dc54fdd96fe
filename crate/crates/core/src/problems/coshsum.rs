use rand::Rng;

use super::Objective;
use crate::error::Result;
use crate::param::{Matrix, ParamSet, ShapeSpec};

/// `f(x) = sum_i (cosh(x_i) - 1)`, minimized at the origin. Its curvature
/// grows with the gap, which makes it a convenient smoothness-ratio testbed.
#[derive(Debug, Clone)]
pub struct CoshSum {
    shapes: ShapeSpec,
    x_star: ParamSet,
}

impl CoshSum {
    pub fn new(dim: usize) -> Result<Self> {
        let shapes = ShapeSpec::vector(dim)?;
        Ok(Self {
            x_star: ParamSet::zeros(&shapes),
            shapes,
        })
    }

    /// Uniform on `[-scale, scale]` per coordinate.
    pub(crate) fn initial_point(&self, r: &mut impl Rng, scale: f64) -> ParamSet {
        let (n, _) = self.shapes.layers()[0];
        let v: Vec<f64> = (0..n).map(|_| scale * r.random_range(-1.0..=1.0)).collect();
        ParamSet::single(Matrix::column(&v))
    }
}

impl Objective for CoshSum {
    fn shapes(&self) -> &ShapeSpec {
        &self.shapes
    }

    fn loss(&self, x: &ParamSet) -> Result<f64> {
        self.check_shape(x)?;
        // cosh(v) - 1 = 2 sinh(v / 2)^2 avoids cancellation near 0.
        Ok(x.iter().map(|v| 2.0 * (0.5 * v).sinh().powi(2)).sum())
    }

    fn grad(&self, x: &ParamSet) -> Result<ParamSet> {
        self.check_shape(x)?;
        x.map(f64::sinh)
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn x_star(&self) -> Option<&ParamSet> {
        Some(&self.x_star)
    }
}
