//! Orthogonalization `G = U S V^T  ->  U V^T`, exactly via SVD or approximately
//! via Newton–Schulz matrix polynomials.
//!
//! The Newton–Schulz path pre-scales `G` by `1 / ||G||_F`, which places every
//! nonzero singular value in `(0, 1]`, then applies odd quintic polynomials
//! `X <- a X + b X (X^T X) + c X (X^T X)^2`. The default coefficients are chosen
//! greedily: step `k` uses the quintic that best approximates the constant 1
//! in the uniform norm on the interval the singular values occupy after step
//! `k - 1`, starting from `[NS_LOWER_BOUND, 1]`. After [`MINIMAX_STEPS`] steps
//! the classical quintic `(15, -10, 3) / 8`, which fixes 1 with third-order
//! contact, refines further.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{svd, Matrix};

/// Smallest Frobenius-scaled singular value the default schedule is tuned for.
///
/// Any matrix with `min(m, n) <= 8` and condition number `<= 100` has
/// `s_min / ||G||_F >= 1 / (100 * sqrt(8)) > 3.5e-3`.
pub const NS_LOWER_BOUND: f64 = 3e-3;

/// Number of minimax-designed steps before switching to the classical quintic.
pub const MINIMAX_STEPS: usize = 5;

pub const DEFAULT_NS_STEPS: usize = 5;

/// Coefficients of the odd quintic `p(x) = a x + b x^3 + c x^5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quintic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quintic {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a + x2 * (self.b + self.c * x2))
    }

    /// Positive critical points of `p`, ascending.
    fn critical_points(&self) -> Vec<f64> {
        // p'(x) = a + 3b y + 5c y^2 with y = x^2.
        let (qa, qb, qc) = (5.0 * self.c, 3.0 * self.b, self.a);
        let mut ys = Vec::new();
        if qa.abs() < 1e-300 {
            if qb != 0.0 {
                ys.push(-qc / qb);
            }
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let r = disc.sqrt();
                ys.push((-qb - r) / (2.0 * qa));
                ys.push((-qb + r) / (2.0 * qa));
            }
        }
        let mut xs: Vec<f64> = ys.into_iter().filter(|y| *y > 0.0).map(f64::sqrt).collect();
        xs.sort_by(f64::total_cmp);
        xs
    }
}

/// The fixed quintic widely used in Muon implementations. It trades accuracy for
/// speed: iterates settle in a band around 1 (roughly `[0.7, 1.15]`) instead of
/// converging to it.
pub const JORDAN_QUINTIC: Quintic = Quintic::new(3.4445, -4.7750, 2.0315);

/// Classical quintic Newton–Schulz polynomial; 1 is a superattracting fixed point.
pub const CLASSICAL_QUINTIC: Quintic = Quintic::new(15.0 / 8.0, -10.0 / 8.0, 3.0 / 8.0);

/// Coefficient schedule used by [`orthogonalize_ns_with`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NsCoefficients {
    /// Greedy minimax schedule, then the classical quintic.
    #[default]
    Minimax,
    /// The same quintic at every step.
    Fixed(Quintic),
}

impl NsCoefficients {
    pub fn step(&self, k: usize) -> Quintic {
        match self {
            NsCoefficients::Minimax => {
                let sched = minimax_schedule();
                sched.get(k).copied().unwrap_or(CLASSICAL_QUINTIC)
            }
            NsCoefficients::Fixed(q) => *q,
        }
    }
}

/// Best uniform approximation of the constant 1 on `[lo, hi]` by an odd quintic.
///
/// Returns the polynomial and its maximum error. Uses Remez exchange on the
/// four-point alternation set `{lo, x1, x2, hi}` where `x1 < x2` are the
/// critical points of the polynomial.
pub fn minimax_quintic(lo: f64, hi: f64) -> Result<(Quintic, f64)> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("minimax interval [{lo}, {hi}]")));
    }
    let mut xs = [
        lo,
        lo + (hi - lo) / 3.0,
        lo + 2.0 * (hi - lo) / 3.0,
        hi,
    ];
    let mut q = Quintic::new(0.0, 0.0, 0.0);
    for _ in 0..200 {
        // a x + b x^3 + c x^5 + s_i E = 1 with alternating signs s_i.
        let mut sys = [[0.0; 5]; 4];
        for (i, &x) in xs.iter().enumerate() {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sys[i] = [x, x.powi(3), x.powi(5), sign, 1.0];
        }
        let sol = solve4(sys)?;
        q = Quintic::new(sol[0], sol[1], sol[2]);
        let crit: Vec<f64> = q
            .critical_points()
            .into_iter()
            .filter(|&x| x > lo && x < hi)
            .collect();
        if crit.len() != 2 {
            return Err(Error::Numerical(format!(
                "Remez exchange lost its alternation set on [{lo}, {hi}]"
            )));
        }
        let next = [lo, crit[0], crit[1], hi];
        let shift = xs
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        xs = next;
        if shift <= 1e-15 * hi {
            break;
        }
    }
    let err = xs.iter().fold(0.0_f64, |m, &x| m.max((1.0 - q.eval(x)).abs()));
    Ok((q, err))
}

fn solve4(mut a: [[f64; 5]; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Numerical("singular Remez system".into()));
        }
        a.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][4] - s) / a[row][row];
    }
    Ok(x)
}

/// Greedy minimax schedule starting from `[NS_LOWER_BOUND, 1]`, with the error
/// bound reached after each step.
pub fn minimax_schedule_with_errors() -> &'static [(Quintic, f64)] {
    static SCHEDULE: OnceLock<Vec<(Quintic, f64)>> = OnceLock::new();
    SCHEDULE.get_or_init(|| {
        let (mut lo, mut hi) = (NS_LOWER_BOUND, 1.0);
        let mut out = Vec::with_capacity(MINIMAX_STEPS);
        for _ in 0..MINIMAX_STEPS {
            let (q, err) = minimax_quintic(lo, hi).expect("minimax schedule on a valid interval");
            out.push((q, err));
            lo = 1.0 - err;
            hi = 1.0 + err;
        }
        out
    })
}

fn minimax_schedule() -> Vec<Quintic> {
    minimax_schedule_with_errors().iter().map(|(q, _)| *q).collect()
}

/// `U_r V_r^T` over the strictly positive singular values. The zero matrix maps
/// to itself.
pub fn orthogonalize_exact(g: &Matrix) -> Result<Matrix> {
    let d = svd(g)?;
    let (m, n) = g.shape();
    let r = d.rank();
    Ok(Matrix::from_fn(m, n, |i, j| {
        (0..r).map(|l| d.u.get(i, l) * d.v.get(j, l)).sum()
    }))
}

/// Newton–Schulz orthogonalization with the default minimax schedule.
pub fn orthogonalize_ns(g: &Matrix, steps: usize) -> Result<Matrix> {
    orthogonalize_ns_with(g, steps, NsCoefficients::Minimax)
}

pub fn orthogonalize_ns_with(g: &Matrix, steps: usize, coeffs: NsCoefficients) -> Result<Matrix> {
    let norm = g.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::DegenerateGradient(
            "Newton-Schulz orthogonalization of a zero matrix".into(),
        ));
    }
    if !norm.is_finite() {
        return Err(Error::Numerical("non-finite matrix in Newton-Schulz".into()));
    }
    let transposed = g.rows() > g.cols();
    let mut x = if transposed { g.transpose() } else { g.clone() };
    x = x.scale(1.0 / norm);
    for k in 0..steps {
        let q = coeffs.step(k);
        let a = x.matmul(&x.transpose())?;
        let a2 = a.matmul(&a)?;
        let poly = a.scale(q.b).add_scaled(&a2, q.c)?;
        x = x.scale(q.a).add_scaled(&poly.matmul(&x)?, 1.0)?;
    }
    Ok(if transposed { x.transpose() } else { x })
}
