//! Parameter containers and the small dense linear-algebra kernel.
//!
//! A model is an ordered list of real matrices (layers). Every arithmetic
//! operation preserves the layer shapes and rejects non-finite results.

mod matrix;
pub mod svd;

pub use matrix::Matrix;
pub use svd::{singular_values, svd, Svd};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered list of `(rows, cols)` layer shapes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct ShapeSpec(Vec<(usize, usize)>);

impl ShapeSpec {
    pub fn new(layers: Vec<(usize, usize)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidShape("no layers".into()));
        }
        if let Some((r, c)) = layers.iter().find(|(r, c)| *r == 0 || *c == 0) {
            return Err(Error::InvalidShape(format!("layer of shape {r}x{c}")));
        }
        Ok(Self(layers))
    }

    pub fn vector(dim: usize) -> Result<Self> {
        Self::new(vec![(dim, 1)])
    }

    pub fn layers(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.0.iter().map(|(r, c)| r * c).sum()
    }
}

impl TryFrom<Vec<(usize, usize)>> for ShapeSpec {
    type Error = Error;

    fn try_from(v: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ShapeSpec> for Vec<(usize, usize)> {
    fn from(s: ShapeSpec) -> Self {
        s.0
    }
}

/// Model parameters, gradients, or momentum buffers: one matrix per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    layers: Vec<Matrix>,
}

impl ParamSet {
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidShape("no layers".into()));
        }
        if let Some(m) = layers.iter().find(|m| m.rows() == 0 || m.cols() == 0) {
            return Err(Error::InvalidShape(format!("layer of shape {:?}", m.shape())));
        }
        if !layers.iter().all(Matrix::is_finite) {
            return Err(Error::Numerical("non-finite parameter entry".into()));
        }
        Ok(Self { layers })
    }

    pub fn single(m: Matrix) -> Self {
        Self::new(vec![m]).expect("single layer must be non-empty and finite")
    }

    pub fn zeros(shapes: &ShapeSpec) -> Self {
        Self {
            layers: shapes
                .layers()
                .iter()
                .map(|&(r, c)| Matrix::zeros(r, c))
                .collect(),
        }
    }

    /// Builds a column vector parameter set (one `n x 1` layer).
    pub fn from_column(values: &[f64]) -> Self {
        Self::single(Matrix::column(values))
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Matrix> {
        self.layers
    }

    pub fn shapes(&self) -> ShapeSpec {
        ShapeSpec(self.layers.iter().map(Matrix::shape).collect())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Iterates over every scalar entry, layer by layer.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|m| m.as_slice().iter().copied())
    }

    pub fn check_same_shape(&self, other: &ParamSet) -> Result<()> {
        if self.layers.len() != other.layers.len()
            || self
                .layers
                .iter()
                .zip(&other.layers)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shapes().layers(),
                other.shapes().layers()
            )));
        }
        Ok(())
    }

    pub fn conforms_to(&self, shapes: &ShapeSpec) -> bool {
        self.layers.len() == shapes.len()
            && self
                .layers
                .iter()
                .zip(shapes.layers())
                .all(|(m, s)| m.shape() == *s)
    }

    /// Layer-wise `self + alpha * other`.
    pub fn add_scaled(&self, other: &ParamSet, alpha: f64) -> Result<ParamSet> {
        self.check_same_shape(other)?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.add_scaled(b, alpha))
            .collect::<Result<Vec<_>>>()?;
        Self::finite(layers)
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &ParamSet, beta: f64) -> Result<ParamSet> {
        self.check_same_shape(other)?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.scale(alpha).add_scaled(b, beta))
            .collect::<Result<Vec<_>>>()?;
        Self::finite(layers)
    }

    pub fn sub(&self, other: &ParamSet) -> Result<ParamSet> {
        self.add_scaled(other, -1.0)
    }

    pub fn scale(&self, alpha: f64) -> Result<ParamSet> {
        Self::finite(self.layers.iter().map(|m| m.scale(alpha)).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ParamSet> {
        Self::finite(self.layers.iter().map(|m| m.map(&f)).collect())
    }

    /// Trace inner product summed over layers.
    pub fn inner_product(&self, other: &ParamSet) -> Result<f64> {
        self.check_same_shape(other)?;
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(Matrix::is_zero)
    }

    fn finite(layers: Vec<Matrix>) -> Result<ParamSet> {
        if layers.iter().all(Matrix::is_finite) {
            Ok(ParamSet { layers })
        } else {
            Err(Error::Numerical("non-finite parameter entry".into()))
        }
    }
}

impl From<Matrix> for ParamSet {
    fn from(m: Matrix) -> Self {
        ParamSet::single(m)
    }
}
