//! Empirical smoothness measurement, curve fitting, and sanity checks for
//! schedules and gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dual_norm, primal_norm, GeometryKind};
use crate::param::{singular_values, Matrix, ParamSet};
use crate::problems::Objective;
use crate::schedule::{eta_practical, CoefficientSet, TheoreticalParams};

/// One `(gap, ratio)` observation along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessSample {
    pub delta: f64,
    pub ratio: f64,
}

/// `||grad f(x_t1) - grad f(x_t)||_* / ||x_t1 - x_t||`.
pub fn smoothness_ratio(
    obj: &dyn Objective,
    x_t: &ParamSet,
    x_t1: &ParamSet,
    geom: &GeometryKind,
) -> Result<f64> {
    let step = x_t1.sub(x_t)?;
    let denom = primal_norm(&step, geom)?;
    if denom == 0.0 {
        return Err(Error::DegenerateInput("zero displacement".into()));
    }
    let dg = obj.grad(x_t1)?.sub(&obj.grad(x_t)?)?;
    Ok(dual_norm(&dg, geom)? / denom)
}

/// Least-squares fit of `ratio ~ K0 + K1 delta + K2 delta^2`, weighted by
/// the inverse squared fitted value so that residuals count relative to the
/// curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub n_samples: usize,
    pub rms_residual: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl QuadraticFit {
    pub fn eval(&self, delta: f64) -> f64 {
        self.k0 + delta * (self.k1 + self.k2 * delta)
    }

    /// Smallest fitted value over the sampled gap range.
    pub fn min_over_range(&self) -> f64 {
        let mut m = self.eval(self.delta_min).min(self.eval(self.delta_max));
        if self.k2 != 0.0 {
            let v = -self.k1 / (2.0 * self.k2);
            if v > self.delta_min && v < self.delta_max {
                m = m.min(self.eval(v));
            }
        }
        m
    }

    /// Constants for the theoretical schedules with `rho = 2`. Negative
    /// coefficients are raised to zero, which only increases the curve on
    /// `delta >= 0`.
    pub fn upper_params(&self) -> Result<TheoreticalParams> {
        let p = TheoreticalParams::new(2.0, self.k0.max(0.0), self.k1.max(0.0), self.k2.max(0.0));
        p.validate()?;
        Ok(p)
    }
}

/// Largest accepted condition number of the scaled normal-equation matrix.
pub const MAX_FIT_CONDITION: f64 = 1e12;

/// Reweighting passes after the unweighted start.
const REWEIGHT_PASSES: usize = 2;

fn design_row(d: f64) -> [f64; 3] {
    [1.0, d, d * d]
}

fn solve_weighted(
    samples: &[SmoothnessSample],
    scale: [f64; 3],
    weight: impl Fn(f64) -> f64,
) -> Result<[f64; 3]> {
    let mut gram = Matrix::zeros(3, 3);
    let mut rhs = [0.0; 3];
    for s in samples {
        let w = weight(s.delta);
        let row = design_row(s.delta);
        for i in 0..3 {
            let ri = row[i] / scale[i];
            rhs[i] += w * ri * s.ratio;
            for j in 0..3 {
                gram.set(i, j, gram.get(i, j) + w * ri * row[j] / scale[j]);
            }
        }
    }
    let sv = singular_values(&gram)?;
    let cond = sv[0] / sv[2];
    if !(cond <= MAX_FIT_CONDITION) {
        return Err(Error::Fit(format!("design condition number {cond:e}")));
    }
    let sol = solve3(&gram, rhs)?;
    Ok([sol[0] / scale[0], sol[1] / scale[1], sol[2] / scale[2]])
}

pub fn fit_quadratic(samples: &[SmoothnessSample]) -> Result<QuadraticFit> {
    if samples.iter().any(|s| !s.delta.is_finite() || !s.ratio.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "{} distinct gap values; at least 3 are required",
            distinct.len()
        )));
    }

    let mut scale = [0.0_f64; 3];
    for s in samples {
        for (sc, v) in scale.iter_mut().zip(design_row(s.delta)) {
            *sc = sc.max(v.abs());
        }
    }
    let mean = samples.iter().map(|s| s.ratio.abs()).sum::<f64>() / samples.len() as f64;
    let floor = (1e-6 * mean).max(f64::MIN_POSITIVE);
    let mut k = solve_weighted(samples, scale, |_| 1.0)?;
    for _ in 0..REWEIGHT_PASSES {
        let prev = k;
        k = solve_weighted(samples, scale, |d| {
            let v = prev[0] + d * (prev[1] + prev[2] * d);
            v.max(floor).powi(-2)
        })?;
    }
    let [k0, k1, k2] = k;

    let mut fit = QuadraticFit {
        k0,
        k1,
        k2,
        n_samples: samples.len(),
        rms_residual: 0.0,
        delta_min: distinct[0],
        delta_max: distinct[distinct.len() - 1],
    };
    let ss: f64 = samples.iter().map(|s| (fit.eval(s.delta) - s.ratio).powi(2)).sum();
    fit.rms_residual = (ss / samples.len() as f64).sqrt();
    Ok(fit)
}

fn solve3(a: &Matrix, b: [f64; 3]) -> Result<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a.get(i, j);
        }
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col] == 0.0 {
            return Err(Error::Fit("singular normal equations".into()));
        }
        m.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][3] - s) / m[row][row];
    }
    Ok(x)
}

/// A named numeric check with its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub measured: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            measured,
            passed: measured <= tolerance,
        }
    }

    /// Passes when `measured > tolerance`.
    pub fn above(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            measured,
            passed: measured > tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub checks: Vec<Check>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;
pub const SCAN_POINTS: usize = 4096;

/// Re-evaluates the defining constraints of a coefficient set:
///
/// * `stationary`: `eta'(delta_prime) = 0`, scaled by `delta_prime / lr`;
/// * `peak`: `eta(delta_prime) = lr`, relative to `lr`;
/// * `floor`: `eta(delta0) = lr / div`, relative to `lr / div`;
/// * `denominator`: minimum of `K0 + K1 D + K2 D^2` over a uniform scan of `(0, delta0]`;
/// * `derivative_sign`: scan points where `eta'` has the wrong sign on either side of `delta_prime`.
pub fn verify_constraints(c: &CoefficientSet) -> ConstraintReport {
    let rel = |got: Result<f64>, want: f64| match got {
        Ok(v) => ((v - want) / want).abs(),
        Err(_) => f64::INFINITY,
    };
    let stationary = (c.derivative(c.delta_prime) * c.delta_prime / c.lr).abs();
    let peak = rel(eta_practical(c.delta_prime, c), c.lr);
    let floor = rel(eta_practical(c.delta0, c), c.lr / c.div);

    let mut min_denom = f64::INFINITY;
    let mut wrong_sign = 0usize;
    let check_sign = c.div > 1.0;
    for k in 1..=SCAN_POINTS {
        let d = c.delta0 * k as f64 / SCAN_POINTS as f64;
        min_denom = min_denom.min(c.denominator(d));
        if check_sign && (d - c.delta_prime).abs() > 1e-9 * c.delta_prime {
            let slope = c.derivative(d);
            let ok = if d < c.delta_prime { slope > 0.0 } else { slope < 0.0 };
            wrong_sign += usize::from(!ok);
        }
    }
    ConstraintReport {
        checks: vec![
            Check::at_most("stationary", nan_to_inf(stationary), CONSTRAINT_TOLERANCE),
            Check::at_most("peak", peak, CONSTRAINT_TOLERANCE),
            Check::at_most("floor", floor, CONSTRAINT_TOLERANCE),
            Check::above("denominator", min_denom, 0.0),
            Check::at_most("derivative_sign", wrong_sign as f64, 0.0),
        ],
    }
}

fn nan_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Largest relative deviation between the analytic gradient and central
/// differences with step `1e-5 * (1 + |x_i|)`; the denominator is
/// `max(|analytic|, |numeric|, 1)`.
pub fn grad_check(obj: &dyn Objective, x: &ParamSet) -> Result<f64> {
    let g = obj.grad(x)?;
    let mut worst = 0.0_f64;
    let mut layers = x.layers().to_vec();
    for (l, ga_layer) in g.layers().iter().enumerate() {
        for idx in 0..layers[l].as_slice().len() {
            let v = layers[l].as_slice()[idx];
            let h = 1e-5 * (1.0 + v.abs());
            layers[l].as_mut_slice()[idx] = v + h;
            let fp = obj.loss(&ParamSet::new(layers.clone())?)?;
            layers[l].as_mut_slice()[idx] = v - h;
            let fm = obj.loss(&ParamSet::new(layers.clone())?)?;
            layers[l].as_mut_slice()[idx] = v;
            let num = (fp - fm) / (2.0 * h);
            let ana = ga_layer.as_slice()[idx];
            let err = (ana - num).abs() / ana.abs().max(num.abs()).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Average ranks, with ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `NaN` if either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "spearman needs two equal-length series of length >= 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    Ok(sab / (saa * sbb).sqrt())
}
