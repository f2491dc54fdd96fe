use rand::Rng;
use rand_distr::StandardNormal;

use super::{rng, Objective, StochasticObjective};
use crate::error::{Error, Result};
use crate::param::{ParamSet, ShapeSpec};
use crate::schedule::TheoreticalParams;

/// Consistent least squares `f(x) = mean_i (a_i^T x - b_i)^2 / 2` with
/// `b = A x*`, so every sample is minimized (with value 0) at `x*`.
#[derive(Debug, Clone)]
pub struct InterpLeastSquares {
    shapes: ShapeSpec,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    x_star: ParamSet,
    batch_size: usize,
}

impl InterpLeastSquares {
    /// Rows of `A` and `x*` standard normal; `A` from stream 2, `x*` from stream 1.
    pub fn random(n_samples: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut r = rng(seed, 2);
        let a: Vec<Vec<f64>> = (0..n_samples)
            .map(|_| (0..dim).map(|_| r.sample(StandardNormal)).collect())
            .collect();
        let mut r = rng(seed, 1);
        let x_star: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        Self::from_parts(a, &x_star)
    }

    pub fn from_parts(a: Vec<Vec<f64>>, x_star: &[f64]) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidShape("no samples".into()));
        }
        if a.iter().any(|row| row.len() != x_star.len()) {
            return Err(Error::ShapeMismatch("sample width differs from x*".into()));
        }
        let b = a
            .iter()
            .map(|row| row.iter().zip(x_star).map(|(u, v)| u * v).sum())
            .collect();
        Ok(Self {
            shapes: ShapeSpec::vector(x_star.len())?,
            a,
            b,
            x_star: ParamSet::from_column(x_star),
            batch_size: 1,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn n_samples(&self) -> usize {
        self.a.len()
    }

    /// `max_i ||a_i||^2`, a valid curvature bound for every batch.
    pub fn max_row_norm2(&self) -> f64 {
        self.a
            .iter()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn full(&self) -> &dyn Objective {
        self
    }

    pub fn batch(&self, rows: Vec<usize>) -> LsBatch<'_> {
        LsBatch { parent: self, rows }
    }

    pub(crate) fn initial_point(&self, r: &mut impl Rng, scale: f64) -> ParamSet {
        let v: Vec<f64> = (0..self.x_star.layers()[0].rows())
            .map(|_| scale * r.sample::<f64, _>(StandardNormal))
            .collect();
        ParamSet::from_column(&v)
    }

    fn residual(&self, i: usize, x: &[f64]) -> f64 {
        self.a[i].iter().zip(x).map(|(u, v)| u * v).sum::<f64>() - self.b[i]
    }

    fn loss_rows(&self, rows: &[usize], x: &ParamSet) -> Result<f64> {
        self.check_shape(x)?;
        let x = x.layers()[0].as_slice();
        let s: f64 = rows.iter().map(|&i| self.residual(i, x).powi(2)).sum();
        Ok(0.5 * s / rows.len() as f64)
    }

    fn grad_rows(&self, rows: &[usize], x: &ParamSet) -> Result<ParamSet> {
        self.check_shape(x)?;
        let xs = x.layers()[0].as_slice();
        let mut g = vec![0.0; xs.len()];
        for &i in rows {
            let r = self.residual(i, xs) / rows.len() as f64;
            for (gj, aj) in g.iter_mut().zip(&self.a[i]) {
                *gj += r * aj;
            }
        }
        Ok(ParamSet::from_column(&g))
    }

    fn all_rows(&self) -> Vec<usize> {
        (0..self.a.len()).collect()
    }
}

impl Objective for InterpLeastSquares {
    fn shapes(&self) -> &ShapeSpec {
        &self.shapes
    }

    fn loss(&self, x: &ParamSet) -> Result<f64> {
        self.loss_rows(&self.all_rows(), x)
    }

    fn grad(&self, x: &ParamSet) -> Result<ParamSet> {
        self.grad_rows(&self.all_rows(), x)
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn x_star(&self) -> Option<&ParamSet> {
        Some(&self.x_star)
    }

    fn known_constants(&self) -> Option<TheoreticalParams> {
        Some(TheoreticalParams::new(2.0, self.max_row_norm2(), 0.0, 0.0))
    }
}

impl StochasticObjective for InterpLeastSquares {
    fn full(&self) -> &dyn Objective {
        self
    }

    /// `batch_size` rows drawn uniformly with replacement.
    fn sample(&self, seed: u64, index: u64) -> Box<dyn Objective + '_> {
        let mut r = rng(seed ^ 0x5eed_ba7c, index);
        let rows = (0..self.batch_size)
            .map(|_| r.random_range(0..self.a.len()))
            .collect();
        Box::new(self.batch(rows))
    }
}

/// A mini-batch of an [`InterpLeastSquares`] problem.
#[derive(Debug, Clone)]
pub struct LsBatch<'a> {
    parent: &'a InterpLeastSquares,
    rows: Vec<usize>,
}

impl LsBatch<'_> {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

impl Objective for LsBatch<'_> {
    fn shapes(&self) -> &ShapeSpec {
        &self.parent.shapes
    }

    fn loss(&self, x: &ParamSet) -> Result<f64> {
        self.parent.loss_rows(&self.rows, x)
    }

    fn grad(&self, x: &ParamSet) -> Result<ParamSet> {
        self.parent.grad_rows(&self.rows, x)
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn x_star(&self) -> Option<&ParamSet> {
        Some(&self.parent.x_star)
    }

    fn known_constants(&self) -> Option<TheoreticalParams> {
        let k = self
            .rows
            .iter()
            .map(|&i| self.parent.a[i].iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        Some(TheoreticalParams::new(2.0, k, 0.0, 0.0))
    }
}
