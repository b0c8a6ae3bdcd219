use nalgebra::{DMatrix, DVector};

use super::lstsq::lstsq_vec;
use crate::error::{Error, Result};

/// Output of [`nnls`].
#[derive(Debug, Clone)]
pub struct NnlsReport {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    /// Numerical rank of the columns left free at the solution.
    pub passive_rank: usize,
    pub passive_len: usize,
}

/// Nonnegative least squares `min ||A x - b||, x >= 0` by the Lawson–Hanson
/// active-set method.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsReport> {
    let (m, n) = a.shape();
    assert_eq!(m, b.len(), "row mismatch");
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    if n == 0 {
        return Ok(NnlsReport {
            x,
            residual_norm: b.norm(),
            passive_rank: 0,
            passive_len: 0,
        });
    }
    let tol = 10.0 * f64::EPSILON * a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max) * m.max(n) as f64;
    let max_iter = 30 * n.max(3);
    let mut iter = 0;

    let mut w = a.transpose() * (b - a * &x);
    loop {
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        loop {
            iter += 1;
            if iter > max_iter {
                return Err(Error::MaxIterations);
            }
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = a.select_columns(&idx);
            let (z, _) = lstsq_vec(&sub, b);
            if z.iter().all(|&v| v > 0.0) {
                for (pos, &i) in idx.iter().enumerate() {
                    x[i] = z[pos];
                }
                break;
            }
            // step back toward x until the first passive variable hits zero
            let mut alpha = f64::INFINITY;
            for (pos, &i) in idx.iter().enumerate() {
                if z[pos] <= 0.0 {
                    let step = x[i] / (x[i] - z[pos]);
                    if step < alpha {
                        alpha = step;
                    }
                }
            }
            for (pos, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[pos] - x[i]);
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = a.transpose() * (b - a * &x);
    }

    let residual_norm = (a * &x - b).norm();
    let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
    let passive_rank = if idx.is_empty() {
        0
    } else {
        let sub = a.select_columns(&idx);
        let (_, rep) = lstsq_vec(&sub, b);
        rep.rank
    };
    Ok(NnlsReport {
        x,
        residual_norm,
        passive_rank,
        passive_len: idx.len(),
    })
}
