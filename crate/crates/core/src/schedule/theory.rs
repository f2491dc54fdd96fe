//! Step sizes derived from `(rho, K0, K1, Krho)`-smoothness, where the local
//! curvature is bounded by `K(D) = K0 + K1 D + Krho D^rho` in terms of the
//! suboptimality gap `D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoreticalParams {
    pub rho: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(rename = "K1", default)]
    pub k1: f64,
    #[serde(rename = "Krho", default)]
    pub krho: f64,
}

impl TheoreticalParams {
    pub fn new(rho: f64, k0: f64, k1: f64, krho: f64) -> Self {
        Self { rho, k0, k1, krho }
    }

    pub fn validate(&self) -> Result<()> {
        let ks = [self.k0, self.k1, self.krho];
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidCoefficients(format!("rho = {}", self.rho)));
        }
        if ks.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::InvalidCoefficients(format!(
                "constants must be finite and non-negative: {ks:?}"
            )));
        }
        if ks.iter().all(|k| *k == 0.0) {
            return Err(Error::InvalidCoefficients("all smoothness constants are zero".into()));
        }
        Ok(())
    }

    /// `K0 + K1 D + Krho D^rho`.
    pub fn curvature(&self, delta: f64) -> f64 {
        let tail = if self.krho == 0.0 { 0.0 } else { self.krho * delta.powf(self.rho) };
        self.k0 + self.k1 * delta + tail
    }

    /// `D / K(D)`, with 0 at the origin.
    fn ratio(&self, delta: f64) -> Result<f64> {
        self.validate()?;
        if !(delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("delta = {delta}")));
        }
        if delta == 0.0 {
            return Ok(0.0);
        }
        Ok(delta / self.curvature(delta))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {v}")))
    }
}

/// `D / (dist * K(D))` where `dist` bounds `||x0 - x*||`.
pub fn eta_thm1(delta: f64, p: &TheoreticalParams, dist: f64) -> Result<f64> {
    positive("D", dist)?;
    Ok(p.ratio(delta)? / dist)
}

/// `lambda * D / (8 K(D))` for the weight-decay step.
pub fn eta_thm2(delta: f64, p: &TheoreticalParams, lambda: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    if p.rho <= 1.0 {
        return Err(Error::InvalidCoefficients(format!("rho = {} must exceed 1", p.rho)));
    }
    Ok(lambda * p.ratio(delta)? / 8.0)
}

/// Per-batch version of [`eta_thm1`], driven by `D_xi = f_xi(x) - f_xi*`.
pub fn eta_thm3(delta_xi: f64, dist: f64, p: &TheoreticalParams) -> Result<f64> {
    eta_thm1(delta_xi, p, dist)
}

/// Gap at which `D / K(D)` peaks: `(K0 / (Krho (rho - 1)))^(1/rho)`.
/// Returns `+inf` when `Krho = 0`: `D / K(D)` is then increasing, so the
/// schedule decays from the first step.
pub fn transition_point(k0: f64, krho: f64, rho: f64) -> Result<f64> {
    if !(rho > 1.0) {
        return Err(Error::InvalidArgument(format!("rho = {rho} must exceed 1")));
    }
    if !(k0 >= 0.0 && krho >= 0.0) {
        return Err(Error::InvalidArgument(format!("K0 = {k0}, Krho = {krho}")));
    }
    if krho == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((k0 / (krho * (rho - 1.0))).powf(1.0 / rho))
}

/// Largest weight decay for which `lambda * eta <= 1` along the whole
/// schedule of [`eta_thm2`].
pub fn lambda_max(p: &TheoreticalParams) -> Result<f64> {
    p.validate()?;
    let rho = p.rho;
    if rho <= 1.0 {
        return Err(Error::InvalidCoefficients(format!("rho = {rho} must exceed 1")));
    }
    if p.krho == 0.0 && p.k1 == 0.0 {
        return Err(Error::InvalidCoefficients(
            "lambda_max needs Krho > 0 or K1 > 0".into(),
        ));
    }
    let peak = rho * (p.k0 / (rho - 1.0)).powf((rho - 1.0) / rho) * p.krho.powf(1.0 / rho);
    Ok((8.0 * (peak + p.k1)).sqrt())
}

/// `0 < lambda <= 1 / max(||x0||, ||x*||, 1 / lambda_max)`.
pub fn lambda_admissible(lambda: f64, x0_norm: f64, x_star_norm: f64, lambda_max: f64) -> bool {
    let bound = x0_norm.max(x_star_norm).max(1.0 / lambda_max);
    lambda > 0.0 && lambda <= 1.0 / bound
}

/// Converts `(rho, L0, Lrho)` smoothness with `0 < rho < 2` into the
/// gap-based form with exponent `rho / (2 - rho)`.
pub fn convert_smoothness_constants(rho: f64, l0: f64, lrho: f64) -> Result<TheoreticalParams> {
    if !(rho > 0.0 && rho < 2.0) {
        return Err(Error::InvalidArgument(format!("rho = {rho} outside (0, 2)")));
    }
    if !(l0 >= 0.0 && lrho >= 0.0) {
        return Err(Error::InvalidArgument(format!("L0 = {l0}, Lrho = {lrho}")));
    }
    let exp = rho / (2.0 - rho);
    Ok(TheoreticalParams {
        rho: exp,
        k0: 2.0 * l0,
        k1: 0.0,
        krho: lrho * (4.0 * lrho).powf(exp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thm1_examples() {
        let p = TheoreticalParams::new(2.0, 1.0, 0.0, 0.0);
        assert_eq!(eta_thm1(1.0, &p, 1.0).unwrap(), 1.0);
        let p = TheoreticalParams::new(2.0, 1.0, 1.0, 1.0);
        assert!((eta_thm1(0.5, &p, 2.0).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(eta_thm1(0.0, &p, 2.0).unwrap(), 0.0);
        assert!(eta_thm1(1.0, &TheoreticalParams::new(2.0, 0.0, 0.0, 0.0), 1.0).is_err());
        let q = TheoreticalParams::new(1.0, 1.0, 0.0, 0.0);
        assert!((eta_thm3(0.3, 2.0, &q).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn thm2_examples() {
        let p = TheoreticalParams::new(2.0, 1.0, 0.0, 1.0);
        assert!((eta_thm2(1.0, &p, 0.1).unwrap() - 0.00625).abs() < 1e-15);
        assert_eq!(eta_thm2(0.0, &p, 0.1).unwrap(), 0.0);
        let a = eta_thm2(0.7, &p, 0.05).unwrap();
        let b = eta_thm2(0.7, &p, 0.1).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn transition_examples() {
        let t = transition_point(1e-4, 1e3, 2.0).unwrap();
        assert!((t - 1e-7_f64.sqrt()).abs() < 1e-15);
        assert!((transition_point(3.0, 3.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(transition_point(0.0, 2.0, 2.0).unwrap(), 0.0);
        assert_eq!(transition_point(1.0, 0.0, 2.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn lambda_max_examples() {
        assert!((lambda_max(&TheoreticalParams::new(2.0, 1.0, 0.0, 1.0)).unwrap() - 4.0).abs() < 1e-14);
        let v = lambda_max(&TheoreticalParams::new(2.0, 4.0, 0.0, 1.0)).unwrap();
        assert!((v - 32f64.sqrt()).abs() < 1e-14);
        let v = lambda_max(&TheoreticalParams::new(2.0, 3.0, 2.0, 1e-14)).unwrap();
        assert!((v - 4.0).abs() < 1e-4);
        assert!(lambda_max(&TheoreticalParams::new(2.0, 1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn admissibility() {
        assert!(lambda_admissible(0.5, 1.0, 2.0, 4.0));
        assert!(!lambda_admissible(0.6, 1.0, 2.0, 4.0));
        assert!(lambda_admissible(3.0, 0.1, 0.1, 3.0));
        assert!(!lambda_admissible(3.5, 0.1, 0.1, 3.0));
        assert!(!lambda_admissible(0.0, 0.1, 0.1, 3.0));
    }

    #[test]
    fn conversion_examples() {
        let p = convert_smoothness_constants(1.0, 1.0, 1.0).unwrap();
        assert_eq!((p.rho, p.k0, p.k1, p.krho), (1.0, 2.0, 0.0, 4.0));
        let p = convert_smoothness_constants(4.0 / 3.0, 1.0, 1.0).unwrap();
        assert!((p.rho - 2.0).abs() < 1e-15);
        assert!((p.krho - 16.0).abs() < 1e-12);
        let p = convert_smoothness_constants(1e-12, 1.0, 3.0).unwrap();
        assert!(p.rho < 1e-11);
        assert!((p.krho - 3.0).abs() < 1e-9);
        assert!(convert_smoothness_constants(2.0, 1.0, 1.0).is_err());
    }
}
