//! One-sided (Hestenes) Jacobi SVD for small dense matrices.

use super::Matrix;
use crate::error::{Error, Result};

/// Off-diagonal tolerance relative to the column norms being rotated.
const TOLERANCE: f64 = 1e-12;

/// Compact SVD `M = U diag(s) V^T` with `k = min(m, n)` columns in `U` and `V`.
///
/// Singular values are non-negative and sorted in descending order. Columns
/// of `U` belonging to zero singular values are zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let (m, k) = self.u.shape();
        let n = self.v.rows();
        Matrix::from_fn(m, n, |i, j| {
            (0..k)
                .map(|l| self.u.get(i, l) * self.s[l] * self.v.get(j, l))
                .sum()
        })
    }

    /// Number of singular values above `max(m, n) * eps * s_max`.
    pub fn rank(&self) -> usize {
        let threshold = self.rank_threshold();
        self.s.iter().filter(|&&s| s > threshold).count()
    }

    pub(crate) fn rank_threshold(&self) -> f64 {
        let dim = self.u.rows().max(self.v.rows()) as f64;
        let s_max = self.s.first().copied().unwrap_or(0.0);
        dim * f64::EPSILON * s_max
    }
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(m)?.s)
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::Numerical("SVD of a matrix with non-finite entries".into()));
    }
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

/// Requires `rows >= cols`.
fn jacobi_tall(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Column-major working copies so rotations touch contiguous memory.
    let mut u: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let max_sweeps = 10 * n * n;
    let mut converged = n < 2;
    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut u, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge within {max_sweeps} sweeps"
        )));
    }

    let mut triples: Vec<(f64, Vec<f64>, Vec<f64>)> = u
        .into_iter()
        .zip(v)
        .map(|(col, vcol)| {
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ucol = if norm > 0.0 {
                col.iter().map(|x| x / norm).collect()
            } else {
                vec![0.0; col.len()]
            };
            (norm, ucol, vcol)
        })
        .collect();
    triples.sort_by(|a, b| b.0.total_cmp(&a.0));

    let s: Vec<f64> = triples.iter().map(|t| t.0).collect();
    let u = Matrix::from_fn(m, n, |i, j| triples[j].1[i]);
    let v = Matrix::from_fn(n, n, |i, j| triples[j].2[i]);
    Ok(Svd { u, s, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}
