//! Generating-matrix systems, companion matrices and tail extraction.
//!
//! For each column label `alpha` in `B1` the generating polynomial
//! `sum_{beta in B0} G(beta, alpha) x^beta - x^alpha` must be orthogonal to
//! the tensor after multiplication by every monomial in `O_alpha`. Those
//! conditions are the small linear systems `A[alpha] G(:, alpha) = b[alpha]`
//! built here from distinct-index entries only. The companion matrices
//! `N_l(G)` then share eigenvectors `[v_i]_{B0}` with eigenvalues `(u_i)_l`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::combinatorics::{basis_b0, basis_b1, choose, support_o_alpha, IndexSubset};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, eig, gaussian_vector, lstsq_scaled_vec};
use crate::tensor_store::IncompleteSymmetricTensor;

/// Relative eigen-gap below which the random combination is redrawn.
pub const MIN_RELATIVE_GAP: f64 = 1e-8;
/// Number of redraws of `xi` after the first attempt.
pub const GAP_RETRIES: usize = 5;

/// `G` with rows labeled by `B0` and columns by `B1`.
#[derive(Debug, Clone)]
pub struct GeneratingMatrix {
    pub values: DMatrix<Complex64>,
    pub b0: Vec<IndexSubset>,
    pub b1: Vec<IndexSubset>,
    /// `||A[alpha] g - b[alpha]||` per column.
    pub residuals: Vec<f64>,
    pub ill_conditioned: Vec<bool>,
    pub k: usize,
    pub p: usize,
    pub n: usize,
}

impl GeneratingMatrix {
    pub fn rank(&self) -> usize {
        self.b0.len()
    }
}

/// Commuting family `N_{k+1}, ..., N_n`, each `r x r`.
#[derive(Debug, Clone)]
pub struct CompanionSet {
    pub matrices: Vec<DMatrix<Complex64>>,
    pub k: usize,
    pub p: usize,
    pub r: usize,
    pub n: usize,
}

/// Tail vectors recovered from a random combination of the companion matrices.
#[derive(Debug, Clone)]
pub struct TailExtraction {
    /// `w_i`, each of length `n - k`.
    pub tails: Vec<DVector<Complex64>>,
    /// Unit eigenvectors of `N(xi)` matching `tails`.
    pub eigvecs: Vec<DVector<Complex64>>,
    /// Minimum eigenvalue distance over eigenvalue spread.
    pub gap: f64,
    pub xi: Vec<f64>,
    pub attempts: usize,
}

/// Builds `A[alpha]` (rows `O_alpha`, columns `B0`) and `b[alpha]`.
pub fn assemble_system(
    t: &IncompleteSymmetricTensor,
    alpha: &IndexSubset,
    b0: &[IndexSubset],
    k: usize,
    n: usize,
    m: usize,
    p: usize,
) -> Result<(DMatrix<Complex64>, DVector<Complex64>)> {
    let support = support_o_alpha(alpha, k, n, m, p);
    let mut a = DMatrix::zeros(support.len(), b0.len());
    let mut b = DVector::zeros(support.len());
    let mut slots = Vec::with_capacity(m);
    for (row, gamma) in support.iter().enumerate() {
        for (col, beta) in b0.iter().enumerate() {
            slots.clear();
            slots.push(0);
            slots.extend_from_slice(beta.as_slice());
            slots.extend_from_slice(gamma.as_slice());
            slots.sort_unstable();
            a[(row, col)] = t.require(&slots)?;
        }
        slots.clear();
        slots.extend_from_slice(alpha.as_slice());
        slots.extend_from_slice(gamma.as_slice());
        slots.sort_unstable();
        b[row] = t.require(&slots)?;
    }
    Ok((a, b))
}

/// Checks `1 <= p <= m-2`, `p <= k <= n-m+p` and both binomial size conditions.
pub fn check_shape(n: usize, m: usize, r: usize, p: usize, k: usize) -> Result<()> {
    if m < 3 || p < 1 || p > m - 2 {
        return Err(Error::ShapeCondition(format!("need 1 <= p <= m-2, got p={p}, m={m}")));
    }
    if k < p || k + m > n + p {
        return Err(Error::ShapeCondition(format!(
            "need p <= k <= n-m+p, got k={k}, p={p}, n={n}, m={m}"
        )));
    }
    if r == 0 {
        return Err(Error::ShapeCondition("rank must be positive".into()));
    }
    if choose(k, p) < r {
        return Err(Error::ShapeCondition(format!("C({k},{p}) < r={r}")));
    }
    if choose(n - k - 1, m - p - 1) < r {
        return Err(Error::ShapeCondition(format!("C({},{}) < r={r}", n - k - 1, m - p - 1)));
    }
    Ok(())
}

/// Solves every column system in the least-squares sense.
pub fn solve_generating_matrix(t: &IncompleteSymmetricTensor, r: usize, p: usize, k: usize) -> Result<GeneratingMatrix> {
    let m = t.order();
    let n = t
        .dim()
        .checked_sub(1)
        .ok_or_else(|| Error::ShapeCondition("empty tensor".into()))?;
    check_shape(n, m, r, p, k)?;
    let b0 = basis_b0(k, p, r)?;
    let b1 = basis_b1(k, p, n);

    let columns = b1
        .par_iter()
        .map(|alpha| {
            let (a, b) = assemble_system(t, alpha, &b0, k, n, m, p)?;
            let (g, rep) = lstsq_scaled_vec(&a, &b);
            // a rank-deficient system leaves the column of G undetermined
            if rep.rank < r {
                return Err(Error::GeneratingDegenerate {
                    alpha: alpha.as_slice().to_vec(),
                    rank: rep.rank,
                    r,
                });
            }
            Ok((g, rep.residual_norm, rep.ill_conditioned))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = DMatrix::zeros(r, b1.len());
    let mut residuals = Vec::with_capacity(b1.len());
    let mut ill_conditioned = Vec::with_capacity(b1.len());
    for (j, (g, res, ill)) in columns.into_iter().enumerate() {
        values.set_column(j, &g);
        residuals.push(res);
        ill_conditioned.push(ill);
    }
    Ok(GeneratingMatrix {
        values,
        b0,
        b1,
        residuals,
        ill_conditioned,
        k,
        p,
        n,
    })
}

/// `N_l(G)[nu, beta] = G(beta, nu + e_l)` for `l = k+1..=n`.
pub fn companion_matrices(g: &GeneratingMatrix) -> CompanionSet {
    let r = g.rank();
    let tails = g.n - g.k;
    // B1 is ordered head-major, and B0 lists the first r heads in the same order
    let column = |nu: usize, l: usize| nu * tails + (l - g.k - 1);
    let matrices = (g.k + 1..=g.n)
        .map(|l| DMatrix::from_fn(r, r, |nu, beta| g.values[(beta, column(nu, l))]))
        .collect();
    CompanionSet {
        matrices,
        k: g.k,
        p: g.p,
        r,
        n: g.n,
    }
}

fn relative_gap(values: &[Complex64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let dist = (values[i] - values[j]).norm();
            min = min.min(dist);
            max = max.max(dist);
        }
    }
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

/// Eigendecomposes `N(xi) = sum_l xi_l N_l` and reads off the tails through
/// Rayleigh quotients `w_i[j] = v_i^H N_{k+1+j} v_i`.
pub fn extract_tails(ns: &CompanionSet, seed: u64) -> Result<TailExtraction> {
    let r = ns.r;
    let mut best_gap = 0.0;
    for attempt in 0..=GAP_RETRIES {
        let xi = gaussian_vector(derive_seed(seed, attempt as u64), ns.matrices.len());
        let mut combo = DMatrix::<Complex64>::zeros(r, r);
        for (x, mat) in xi.iter().zip(&ns.matrices) {
            combo += mat * Complex64::new(*x, 0.0);
        }
        let pairs = eig(&combo)?;
        let gap = relative_gap(&pairs.values);
        if gap < MIN_RELATIVE_GAP || !gap.is_finite() {
            best_gap = f64::max(best_gap, gap);
            log::debug!("attempt {attempt}: relative eigen-gap {gap:.3e}, redrawing xi");
            continue;
        }
        let tails = pairs
            .vectors
            .iter()
            .map(|v| DVector::from_iterator(ns.matrices.len(), ns.matrices.iter().map(|mat| v.dotc(&(mat * v)))))
            .collect();
        return Ok(TailExtraction {
            tails,
            eigvecs: pairs.vectors,
            gap,
            xi,
            attempts: attempt + 1,
        });
    }
    Err(Error::DegenerateSpectrum {
        gap: best_gap,
        attempts: GAP_RETRIES + 1,
    })
}
