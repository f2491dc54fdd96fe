//! Norm geometries over [`ParamSet`]: primal and dual norms, linear
//! minimization oracles, and the worst-case Frobenius factor `kappa`.
//!
//! | kind           | primal norm                  | dual norm               | LMO                  |
//! |----------------|------------------------------|-------------------------|----------------------|
//! | `Euclidean`    | global Frobenius             | global Frobenius        | `-g / ||g||_F`       |
//! | `EntrywiseMax` | max entry                    | sum of abs entries      | `-sign(g)`           |
//! | `Spectral`     | max layer spectral norm      | sum of nuclear norms    | `-U_r V_r^T` per layer |
//! | `LayerwiseMax` | max of per-layer norms       | sum of per-layer duals  | per-layer LMO        |

mod ortho;

pub use ortho::{
    minimax_quintic, minimax_schedule_with_errors, orthogonalize_exact, orthogonalize_ns,
    orthogonalize_ns_with, NsCoefficients, Quintic, CLASSICAL_QUINTIC, DEFAULT_NS_STEPS,
    JORDAN_QUINTIC, MINIMAX_STEPS, NS_LOWER_BOUND,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{singular_values, Matrix, ParamSet, ShapeSpec};

/// Norm applied to a single layer inside [`GeometryKind::LayerwiseMax`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerNorm {
    #[serde(rename = "euclidean")]
    Euclidean,
    #[serde(rename = "sign")]
    EntrywiseMax,
    #[serde(rename = "spectral")]
    Spectral,
}

/// Geometry of the optimization norm.
///
/// In config files a geometry is written as `"euclidean"`, `"sign"`,
/// `"spectral"`, or a per-layer list such as `["spectral", "euclidean"]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GeometryRepr", into = "GeometryRepr")]
pub enum GeometryKind {
    /// Frobenius norm of the whole parameter set.
    Euclidean,
    EntrywiseMax,
    Spectral,
    LayerwiseMax(Vec<LayerNorm>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GeometryRepr {
    Name(LayerNorm),
    PerLayer(Vec<LayerNorm>),
}

impl TryFrom<GeometryRepr> for GeometryKind {
    type Error = Error;

    fn try_from(r: GeometryRepr) -> Result<Self> {
        Ok(match r {
            GeometryRepr::Name(LayerNorm::Euclidean) => GeometryKind::Euclidean,
            GeometryRepr::Name(LayerNorm::EntrywiseMax) => GeometryKind::EntrywiseMax,
            GeometryRepr::Name(LayerNorm::Spectral) => GeometryKind::Spectral,
            GeometryRepr::PerLayer(v) if v.is_empty() => {
                return Err(Error::Config("empty per-layer geometry list".into()))
            }
            GeometryRepr::PerLayer(v) => GeometryKind::LayerwiseMax(v),
        })
    }
}

impl From<GeometryKind> for GeometryRepr {
    fn from(g: GeometryKind) -> Self {
        match g {
            GeometryKind::Euclidean => GeometryRepr::Name(LayerNorm::Euclidean),
            GeometryKind::EntrywiseMax => GeometryRepr::Name(LayerNorm::EntrywiseMax),
            GeometryKind::Spectral => GeometryRepr::Name(LayerNorm::Spectral),
            GeometryKind::LayerwiseMax(v) => GeometryRepr::PerLayer(v),
        }
    }
}

impl GeometryKind {
    /// The same norm on every one of `n` layers.
    pub fn per_layer(norm: LayerNorm, n: usize) -> Self {
        GeometryKind::LayerwiseMax(vec![norm; n])
    }

    /// Per-layer norms for a model with `n` layers, or `None` for the global
    /// Euclidean geometry, which does not decompose.
    fn layer_norms(&self, n: usize) -> Result<Option<Vec<LayerNorm>>> {
        Ok(match self {
            GeometryKind::Euclidean => None,
            GeometryKind::EntrywiseMax => Some(vec![LayerNorm::EntrywiseMax; n]),
            GeometryKind::Spectral => Some(vec![LayerNorm::Spectral; n]),
            GeometryKind::LayerwiseMax(v) => {
                if v.len() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "geometry lists {} layers, parameters have {n}",
                        v.len()
                    )));
                }
                Some(v.clone())
            }
        })
    }

    /// Short label used in tables.
    pub fn name(&self) -> &'static str {
        match self {
            GeometryKind::Euclidean => "euclidean",
            GeometryKind::EntrywiseMax => "sign",
            GeometryKind::Spectral => "spectral",
            GeometryKind::LayerwiseMax(_) => "layerwise",
        }
    }

    pub fn validate_for(&self, shapes: &ShapeSpec) -> Result<()> {
        self.layer_norms(shapes.len()).map(|_| ())
    }
}

/// How the spectral LMO computes `U_r V_r^T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Orthogonalizer {
    Exact,
    NewtonSchulz {
        steps: usize,
        #[serde(default)]
        coefficients: NsCoefficients,
    },
    /// Exact SVD when `min(m, n) <= 8`, Newton–Schulz otherwise.
    Auto { steps: usize },
}

impl Default for Orthogonalizer {
    fn default() -> Self {
        Orthogonalizer::Auto {
            steps: DEFAULT_NS_STEPS,
        }
    }
}

/// Largest `min(m, n)` for which [`Orthogonalizer::Auto`] uses the exact SVD.
pub const AUTO_EXACT_MAX_DIM: usize = 8;

impl Orthogonalizer {
    pub fn apply(&self, g: &Matrix) -> Result<Matrix> {
        match *self {
            Orthogonalizer::Exact => orthogonalize_exact(g),
            Orthogonalizer::NewtonSchulz { steps, coefficients } => {
                orthogonalize_ns_with(g, steps, coefficients)
            }
            Orthogonalizer::Auto { steps } => {
                if g.rows().min(g.cols()) <= AUTO_EXACT_MAX_DIM {
                    orthogonalize_exact(g)
                } else {
                    orthogonalize_ns(g, steps)
                }
            }
        }
    }
}

/// Entrywise sign with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

fn layer_primal(m: &Matrix, norm: LayerNorm) -> Result<f64> {
    match norm {
        LayerNorm::Euclidean => Ok(m.frobenius_norm()),
        LayerNorm::EntrywiseMax => Ok(m.max_abs()),
        LayerNorm::Spectral => spectral_norm(m),
    }
}

fn layer_dual(m: &Matrix, norm: LayerNorm) -> Result<f64> {
    match norm {
        LayerNorm::Euclidean => Ok(m.frobenius_norm()),
        LayerNorm::EntrywiseMax => Ok(m.l1_norm()),
        LayerNorm::Spectral => nuclear_norm(m),
    }
}

fn layer_lmo(m: &Matrix, norm: LayerNorm, orth: &Orthogonalizer) -> Result<Matrix> {
    match norm {
        LayerNorm::Euclidean => {
            let n = m.frobenius_norm();
            Ok(if n == 0.0 { m.clone() } else { m.scale(-1.0 / n) })
        }
        LayerNorm::EntrywiseMax => Ok(m.map(|v| -sign(v))),
        LayerNorm::Spectral => {
            if m.is_zero() {
                Ok(m.clone())
            } else {
                Ok(orth.apply(m)?.scale(-1.0))
            }
        }
    }
}

pub fn primal_norm(x: &ParamSet, geom: &GeometryKind) -> Result<f64> {
    match geom.layer_norms(x.num_layers())? {
        None => Ok(x.frobenius_norm()),
        Some(norms) => x
            .layers()
            .iter()
            .zip(norms)
            .try_fold(0.0_f64, |acc, (m, n)| Ok(acc.max(layer_primal(m, n)?))),
    }
}

pub fn dual_norm(g: &ParamSet, geom: &GeometryKind) -> Result<f64> {
    match geom.layer_norms(g.num_layers())? {
        None => Ok(g.frobenius_norm()),
        Some(norms) => g
            .layers()
            .iter()
            .zip(norms)
            .map(|(m, n)| layer_dual(m, n))
            .sum(),
    }
}

/// `argmin { <g, q> : ||q|| <= 1 }`, with spectral layers orthogonalized exactly.
pub fn lmo(g: &ParamSet, geom: &GeometryKind) -> Result<ParamSet> {
    lmo_with(g, geom, &Orthogonalizer::Exact)
}

pub fn lmo_with(g: &ParamSet, geom: &GeometryKind, orth: &Orthogonalizer) -> Result<ParamSet> {
    match geom.layer_norms(g.num_layers())? {
        None => {
            let n = g.frobenius_norm();
            if n == 0.0 {
                return Err(Error::DegenerateGradient(
                    "Euclidean LMO of a zero gradient".into(),
                ));
            }
            g.scale(-1.0 / n)
        }
        Some(norms) => {
            if g.is_zero() && norms.iter().any(|n| *n != LayerNorm::EntrywiseMax) {
                return Err(Error::DegenerateGradient(
                    "LMO of a zero gradient under a norm without a sign convention".into(),
                ));
            }
            let layers = g
                .layers()
                .iter()
                .zip(norms)
                .map(|(m, n)| layer_lmo(m, n, orth))
                .collect::<Result<Vec<_>>>()?;
            ParamSet::new(layers)
        }
    }
}

fn layer_kappa(rows: usize, cols: usize, norm: LayerNorm) -> f64 {
    match norm {
        LayerNorm::Euclidean => 1.0,
        LayerNorm::EntrywiseMax => (rows * cols) as f64,
        LayerNorm::Spectral => rows.min(cols) as f64,
    }
}

/// `sup { ||u||_F^2 : ||u|| <= 1 }`. Per-layer contributions add up; the
/// global Euclidean geometry has `kappa = 1`.
pub fn kappa(shapes: &ShapeSpec, geom: &GeometryKind) -> Result<f64> {
    match geom.layer_norms(shapes.len())? {
        None => Ok(1.0),
        Some(norms) => Ok(shapes
            .layers()
            .iter()
            .zip(norms)
            .map(|(&(r, c), n)| layer_kappa(r, c, n))
            .sum()),
    }
}

/// A point of the unit ball attaining `||u||_F^2 = kappa(shapes, geom)`.
pub fn kappa_witness(shapes: &ShapeSpec, geom: &GeometryKind) -> Result<ParamSet> {
    let layers = match geom.layer_norms(shapes.len())? {
        None => {
            let scale = 1.0 / (shapes.numel() as f64).sqrt();
            shapes
                .layers()
                .iter()
                .map(|&(r, c)| Matrix::from_fn(r, c, |_, _| scale))
                .collect()
        }
        Some(norms) => shapes
            .layers()
            .iter()
            .zip(norms)
            .map(|(&(r, c), n)| match n {
                LayerNorm::Euclidean => {
                    let s = 1.0 / ((r * c) as f64).sqrt();
                    Matrix::from_fn(r, c, |_, _| s)
                }
                LayerNorm::EntrywiseMax => {
                    Matrix::from_fn(r, c, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 })
                }
                LayerNorm::Spectral => Matrix::from_fn(r, c, |i, j| if i == j { 1.0 } else { 0.0 }),
            })
            .collect(),
    };
    ParamSet::new(layers)
}
