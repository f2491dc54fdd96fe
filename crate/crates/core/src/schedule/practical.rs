//! The rational schedule `eta(D) = D / (K0 + K1 D + K2 D^2)` and the selection
//! of its transition point.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadrature points used by [`matching_objective`].
pub const QUADRATURE_POINTS: usize = 2048;
pub const DEFAULT_CANDIDATES: usize = 1000;
pub const DEFAULT_SIGMA_F2: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub delta_prime: f64,
    pub delta0: f64,
    pub lr: f64,
    pub div: f64,
}

impl CoefficientSet {
    #[inline]
    pub fn denominator(&self, delta: f64) -> f64 {
        self.k0 + delta * (self.k1 + self.k2 * delta)
    }

    /// Infimum of the denominator over `(0, delta0]`.
    pub fn min_denominator(&self) -> f64 {
        let mut lo = self.denominator(self.delta0);
        if self.k0 == 0.0 {
            // The infimum is the limit 0 at the origin; positivity then hinges
            // on the linear term.
            lo = lo.min(if self.k1 > 0.0 { f64::MIN_POSITIVE } else { 0.0 });
        } else {
            lo = lo.min(self.k0);
        }
        if self.k2 > 0.0 {
            let v = -self.k1 / (2.0 * self.k2);
            if v > 0.0 && v < self.delta0 {
                lo = lo.min(self.k0 - self.k1 * self.k1 / (4.0 * self.k2));
            }
        }
        lo
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.k0, self.k1, self.k2, self.delta_prime, self.delta0, self.lr, self.div];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficients("non-finite coefficient".into()));
        }
        let m = self.min_denominator();
        if m <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "denominator reaches {m:e} on (0, {}]",
                self.delta0
            )));
        }
        Ok(())
    }

    /// Analytic derivative `eta'(D) = (K0 - K2 D^2) / denom(D)^2`.
    pub fn derivative(&self, delta: f64) -> f64 {
        let d = self.denominator(delta);
        (self.k0 - self.k2 * delta * delta) / (d * d)
    }
}

pub fn eta_practical(delta: f64, c: &CoefficientSet) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta}")));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let d = c.denominator(delta);
    if !(d > 0.0) {
        return Err(Error::InvalidCoefficients(format!(
            "denominator {d:e} at delta = {delta}"
        )));
    }
    Ok(delta / d)
}

/// Coefficients with a peak of `lr` at `delta_prime` and the value `lr / div`
/// at `delta0`.
pub fn solve_coefficients(lr: f64, div: f64, delta0: f64, delta_prime: f64) -> Result<CoefficientSet> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("lr = {lr}")));
    }
    if !(div >= 1.0 && div.is_finite()) {
        return Err(Error::InvalidArgument(format!("div = {div}")));
    }
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta0 = {delta0}")));
    }
    if !(delta_prime > 0.0 && delta_prime < delta0) {
        return Err(Error::InvalidArgument(format!(
            "delta_prime = {delta_prime} outside (0, {delta0})"
        )));
    }
    let gap2 = lr * (delta0 - delta_prime).powi(2);
    let k2 = delta0 * (div - 1.0) / gap2;
    let k0 = k2 * delta_prime * delta_prime;
    let k1 = (delta0 * delta0 - 2.0 * delta0 * delta_prime * div + delta_prime * delta_prime) / gap2;
    let c = CoefficientSet {
        k0,
        k1,
        k2,
        delta_prime,
        delta0,
        lr,
        div,
    };
    c.validate()?;
    Ok(c)
}

/// Linear ramp from `lr / div` at `delta0` up to `lr` at `delta_prime`, then a
/// half-cosine down to 0 at the origin.
pub fn target_schedule(delta: f64, lr: f64, div: f64, delta0: f64, delta_prime: f64) -> f64 {
    if delta >= delta_prime {
        let floor = lr / div;
        floor + (lr - floor) * (delta0 - delta) / (delta0 - delta_prime)
    } else {
        0.5 * lr * (1.0 - (PI * delta / delta_prime).cos())
    }
}

/// Weighted squared mismatch between the rational and target schedules
/// around a candidate transition point. Invalid candidates score `+inf`.
pub fn matching_objective(
    delta_prime: f64,
    lr: f64,
    div: f64,
    delta0: f64,
    kappa: f64,
    sigma_f2: f64,
) -> f64 {
    matching_objective_with(delta_prime, lr, div, delta0, kappa, sigma_f2, QUADRATURE_POINTS)
}

/// [`matching_objective`] with a trapezoid rule on `points` uniform nodes.
pub fn matching_objective_with(
    delta_prime: f64,
    lr: f64,
    div: f64,
    delta0: f64,
    kappa: f64,
    sigma_f2: f64,
    points: usize,
) -> f64 {
    let Ok(c) = solve_coefficients(lr, div, delta0, delta_prime) else {
        return f64::INFINITY;
    };
    let points = points.max(2);
    let h = delta0 / (points - 1) as f64;
    let width = kappa / sigma_f2;
    let mut total = 0.0;
    for i in 0..points {
        let d = if i + 1 == points { delta0 } else { i as f64 * h };
        let Ok(eta) = eta_practical(d, &c) else {
            return f64::INFINITY;
        };
        let diff = eta - target_schedule(d, lr, div, delta0, delta_prime);
        let w = (-(d - delta_prime).powi(2) * width).exp();
        let f = w * diff * diff;
        total += if i == 0 || i + 1 == points { 0.5 * f } else { f };
    }
    total * h
}

/// Candidate grid `(k + 1/2) * delta0 / n` for `k = 0..n`.
pub fn candidate_grid(delta0: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| (k as f64 + 0.5) * delta0 / n as f64)
}

/// Grid minimizer of [`matching_objective`]; ties go to the smaller candidate.
pub fn select_delta_prime(
    lr: f64,
    div: f64,
    delta0: f64,
    kappa: f64,
    sigma_f2: f64,
    n_candidates: usize,
) -> Result<f64> {
    if n_candidates == 0 {
        return Err(Error::InvalidArgument("n_candidates = 0".into()));
    }
    if !(kappa > 0.0 && sigma_f2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kappa = {kappa}, sigma_F2 = {sigma_f2}"
        )));
    }
    let mut best: Option<(f64, f64)> = None;
    for cand in candidate_grid(delta0, n_candidates) {
        let obj = matching_objective(cand, lr, div, delta0, kappa, sigma_f2);
        if obj.is_finite() && best.is_none_or(|(_, b)| obj < b) {
            best = Some((cand, obj));
        }
    }
    best.map(|(c, _)| c).ok_or_else(|| {
        Error::SchedulerInit(format!(
            "no valid transition point among {n_candidates} candidates \
             (lr = {lr}, div = {div}, delta0 = {delta0})"
        ))
    })
}
