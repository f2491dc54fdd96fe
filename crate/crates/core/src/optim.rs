//! LMO update rules and the momentum wrappers built on them.
//!
//! Every optimizer here takes a step of the form
//! `x' = (1 - lambda * eta) * x + eta * q` where `q` lies in the unit ball of
//! the optimizer's norm. Without weight decay this is the plain LMO step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lmo, lmo_with, sign, GeometryKind, Orthogonalizer};
use crate::param::{ParamSet, ShapeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "normSGD", alias = "normsgd", alias = "norm_sgd")]
    NormSgd,
    #[serde(rename = "signSGD", alias = "signsgd", alias = "sign_sgd")]
    SignSgd,
    #[serde(rename = "lion", alias = "Lion")]
    Lion,
    #[serde(rename = "muon", alias = "Muon")]
    Muon,
    #[serde(rename = "layerwise")]
    Layerwise,
}

impl OptimizerKind {
    /// Geometry used when the config does not name one.
    pub fn default_geometry(self) -> Option<GeometryKind> {
        match self {
            OptimizerKind::NormSgd => Some(GeometryKind::Euclidean),
            OptimizerKind::SignSgd | OptimizerKind::Lion => Some(GeometryKind::EntrywiseMax),
            OptimizerKind::Muon => Some(GeometryKind::Spectral),
            OptimizerKind::Layerwise => None,
        }
    }
}

fn default_orthogonalizer() -> Orthogonalizer {
    Orthogonalizer::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    #[serde(default)]
    pub beta1: f64,
    /// Lion only: momentum used for the buffer update.
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default)]
    pub weight_decay: f64,
    /// Global Frobenius clipping threshold applied to the raw gradient.
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default)]
    pub geometry: Option<GeometryKind>,
    #[serde(default = "default_orthogonalizer")]
    pub orthogonalizer: Orthogonalizer,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            beta1: 0.0,
            beta2: None,
            weight_decay: 0.0,
            clip: None,
            geometry: None,
            orthogonalizer: Orthogonalizer::default(),
        }
    }

    pub fn lion(beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2: Some(beta2),
            ..Self::new(OptimizerKind::Lion)
        }
    }

    pub fn with_beta1(mut self, beta1: f64) -> Self {
        self.beta1 = beta1;
        self
    }

    pub fn with_weight_decay(mut self, lambda: f64) -> Self {
        self.weight_decay = lambda;
        self
    }

    pub fn with_geometry(mut self, geom: GeometryKind) -> Self {
        self.geometry = Some(geom);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| (0.0..1.0).contains(&b);
        if !in_unit(self.beta1) {
            return Err(Error::Config(format!("beta1 = {} outside [0, 1)", self.beta1)));
        }
        match (self.kind, self.beta2) {
            (OptimizerKind::Lion, None) => {
                return Err(Error::Config("lion requires beta2".into()));
            }
            (_, Some(b)) if !in_unit(b) => {
                return Err(Error::Config(format!("beta2 = {b} outside [0, 1)")));
            }
            _ => {}
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay = {}", self.weight_decay)));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip = {c}")));
            }
        }
        if self.kind == OptimizerKind::Lion
            && self.geometry.as_ref().is_some_and(|g| *g != GeometryKind::EntrywiseMax)
        {
            return Err(Error::Config("lion is defined for the sign geometry only".into()));
        }
        if self.kind == OptimizerKind::Layerwise && self.geometry.is_none() {
            return Err(Error::Config("layerwise optimizer needs a per-layer geometry".into()));
        }
        Ok(())
    }

    /// Effective geometry for a model with the given shapes.
    pub fn resolved_geometry(&self, shapes: &ShapeSpec) -> Result<GeometryKind> {
        let geom = match &self.geometry {
            Some(g) => g.clone(),
            None => self.kind.default_geometry().ok_or_else(|| {
                Error::Config("layerwise optimizer needs a per-layer geometry".into())
            })?,
        };
        geom.validate_for(shapes)?;
        Ok(geom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: ParamSet,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(shapes: &ShapeSpec) -> Self {
        Self {
            m: ParamSet::zeros(shapes),
            step_count: 0,
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size eta = {eta}")))
    }
}

/// `x + eta * lmo(g)`.
pub fn step_lmo(x: &ParamSet, g: &ParamSet, eta: f64, geom: &GeometryKind) -> Result<ParamSet> {
    check_eta(eta)?;
    x.check_same_shape(g)?;
    x.add_scaled(&lmo(g, geom)?, eta)
}

/// `(1 - lambda * eta) * x + eta * lmo(g)`, defined for `0 <= lambda * eta <= 1`.
pub fn step_lmo_wd(
    x: &ParamSet,
    g: &ParamSet,
    eta: f64,
    lambda: f64,
    geom: &GeometryKind,
) -> Result<ParamSet> {
    check_eta(eta)?;
    x.check_same_shape(g)?;
    let q = lmo(g, geom)?;
    decayed_step(x, &q, eta, lambda)
}

fn decayed_step(x: &ParamSet, q: &ParamSet, eta: f64, lambda: f64) -> Result<ParamSet> {
    let product = lambda * eta;
    if !(0.0..=1.0).contains(&product) {
        return Err(Error::InvalidStep {
            lambda,
            eta,
            product,
        });
    }
    if lambda == 0.0 {
        x.add_scaled(q, eta)
    } else {
        x.lincomb(1.0 - product, q, eta)
    }
}

/// `x - eta * g / ||g||_F`.
pub fn step_normalized_sgd(x: &ParamSet, g: &ParamSet, eta: f64) -> Result<ParamSet> {
    step_lmo(x, g, eta, &GeometryKind::Euclidean)
}

/// `beta * m + (1 - beta) * g`.
pub fn momentum_update(m: &ParamSet, g: &ParamSet, beta: f64) -> Result<ParamSet> {
    if beta == 0.0 {
        m.check_same_shape(g)?;
        return Ok(g.clone());
    }
    m.lincomb(beta, g, 1.0 - beta)
}

/// `sign(beta1 * m + (1 - beta1) * g)`; the step moves along its negative.
pub fn lion_direction(m: &ParamSet, g: &ParamSet, beta1: f64) -> Result<ParamSet> {
    momentum_update(m, g, beta1)?.map(sign)
}

/// Rescales `g` so that `||g||_F <= c`.
pub fn clip_global(g: &ParamSet, c: f64) -> Result<ParamSet> {
    let n = g.frobenius_norm();
    if n > c {
        g.scale(c / n)
    } else {
        Ok(g.clone())
    }
}

/// One optimizer step. A zero gradient (or a momentum buffer that cancels
/// to zero) leaves both parameters and state untouched.
pub fn optimizer_step(
    cfg: &OptimizerConfig,
    state: &OptimizerState,
    x: &ParamSet,
    g: &ParamSet,
    eta: f64,
) -> Result<(ParamSet, OptimizerState)> {
    cfg.validate()?;
    check_eta(eta)?;
    x.check_same_shape(g)?;
    state.m.check_same_shape(g)?;
    let geom = cfg.resolved_geometry(&x.shapes())?;

    let g = match cfg.clip {
        Some(c) => clip_global(g, c)?,
        None => g.clone(),
    };
    if g.is_zero() {
        return Ok((x.clone(), state.clone()));
    }

    let (q, m) = match cfg.kind {
        OptimizerKind::Lion => {
            let d = lion_direction(&state.m, &g, cfg.beta1)?;
            let beta2 = cfg.beta2.expect("validated");
            (d.scale(-1.0)?, momentum_update(&state.m, &g, beta2)?)
        }
        _ => {
            let m = momentum_update(&state.m, &g, cfg.beta1)?;
            match lmo_with(&m, &geom, &cfg.orthogonalizer) {
                Ok(q) => (q, m),
                Err(Error::DegenerateGradient(_)) => return Ok((x.clone(), state.clone())),
                Err(e) => return Err(e),
            }
        }
    };
    let x_new = decayed_step(x, &q, eta, cfg.weight_decay)?;
    Ok((
        x_new,
        OptimizerState {
            m,
            step_count: state.step_count + 1,
        },
    ))
}
