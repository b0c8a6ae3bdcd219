//! The three linear least-squares stages that follow tail extraction.
//!
//! With `J1` the `p`-subsets of `[1, k]` and `J2` the `(m-p-1)`-subsets of
//! `[k+1, n]`, the tails give the design `W[gamma, i] = prod_{l in gamma} w_i[l]`.
//! Entries `T[0, beta, gamma]` then determine `lambda_i v_i^beta`, entries
//! `T[j, beta, gamma]` the head coordinates `v_i[j]`, and all of `Omega_m`
//! finally fixes the scales `lambda_i`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::combinatorics::{subsets_lex, IndexSubset};
use crate::error::{Error, Result};
use crate::numerics::{lstsq_scaled, lstsq_scaled_vec};
use crate::tensor_store::{block_matrix, omega_keys, IncompleteSymmetricTensor};

use super::DecompositionParams;

/// Labels shared by the stages.
struct Layout {
    n: usize,
    m: usize,
    j1: Vec<IndexSubset>,
    j2: Vec<IndexSubset>,
}

impl Layout {
    fn new(t: &IncompleteSymmetricTensor, params: &DecompositionParams) -> Self {
        let n = t.dim() - 1;
        let m = t.order();
        Layout {
            n,
            m,
            j1: subsets_lex(1, params.k, params.p),
            j2: subsets_lex(params.k + 1, n, m - params.p - 1),
        }
    }
}

fn check_tails(tails: &[DVector<Complex64>], n: usize, params: &DecompositionParams) -> Result<()> {
    if tails.len() != params.r || tails.iter().any(|w| w.len() != n - params.k) {
        return Err(Error::ShapeCondition(format!(
            "expected {} tails of length {}",
            params.r,
            n - params.k
        )));
    }
    Ok(())
}

/// `W[gamma, i]` over `J2`, with tail coordinate `l` stored at `w[l - k - 1]`.
pub fn tail_design(tails: &[DVector<Complex64>], j2: &[IndexSubset], k: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(j2.len(), tails.len(), |row, i| {
        j2[row]
            .as_slice()
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, &l| acc * tails[i][l - k - 1])
    })
}

/// Fits `T[0, beta, gamma] ~ sum_i gamma_i[beta] W[gamma, i]` for every `beta` in `J1`.
///
/// Returns `gamma_i` (indexed like `J1`) and the Frobenius residual.
pub fn solve_tail_products(
    t: &IncompleteSymmetricTensor,
    tails: &[DVector<Complex64>],
    params: &DecompositionParams,
) -> Result<(Vec<DVector<Complex64>>, f64)> {
    let lay = Layout::new(t, params);
    check_tails(tails, lay.n, params)?;
    let w = tail_design(tails, &lay.j2, params.k);
    let block = block_matrix(t, &lay.j1, &lay.j2, true)?;
    let rep = lstsq_scaled(&w, &block.transpose());
    if rep.rank < params.r {
        return Err(Error::TailsDegenerate {
            rank: rep.rank,
            r: params.r,
        });
    }
    let gammas = (0..params.r).map(|i| rep.solution.row(i).transpose()).collect();
    Ok((gammas, rep.residual_norm))
}

/// For each head coordinate `j`, fits
/// `T[j, beta, gamma] ~ sum_i v_i[j] gamma_i[beta] W[gamma, i]` over
/// `beta in J1` avoiding `j` and `gamma in J2`.
///
/// Returns `v_i` (length `k`) and the largest per-coordinate residual.
pub fn solve_heads(
    t: &IncompleteSymmetricTensor,
    tails: &[DVector<Complex64>],
    gammas: &[DVector<Complex64>],
    params: &DecompositionParams,
) -> Result<(Vec<DVector<Complex64>>, f64)> {
    let lay = Layout::new(t, params);
    check_tails(tails, lay.n, params)?;
    let r = params.r;
    let w = tail_design(tails, &lay.j2, params.k);

    let solved = (1..=params.k)
        .into_par_iter()
        .map(|j| {
            let rows: Vec<(usize, usize)> = lay
                .j1
                .iter()
                .enumerate()
                .filter(|(_, beta)| !beta.contains(j))
                .flat_map(|(b, _)| (0..lay.j2.len()).map(move |g| (b, g)))
                .collect();
            if rows.is_empty() {
                return Err(Error::HeadsDegenerate(j));
            }
            let mut design = DMatrix::zeros(rows.len(), r);
            let mut response = DVector::zeros(rows.len());
            let mut slots = Vec::with_capacity(lay.m);
            for (row, &(b, g)) in rows.iter().enumerate() {
                for i in 0..r {
                    design[(row, i)] = gammas[i][b] * w[(g, i)];
                }
                slots.clear();
                slots.push(j);
                slots.extend_from_slice(lay.j1[b].as_slice());
                slots.extend_from_slice(lay.j2[g].as_slice());
                slots.sort_unstable();
                response[row] = t.require(&slots)?;
            }
            let (x, rep) = lstsq_scaled_vec(&design, &response);
            // a zero response is fit exactly by zero heads even on a degenerate design
            if rep.rank < r && response.norm() > 0.0 {
                return Err(Error::HeadsDegenerate(j));
            }
            Ok((x, rep.residual_norm))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut heads = vec![DVector::zeros(params.k); r];
    let mut worst: f64 = 0.0;
    for (j, (x, res)) in solved.into_iter().enumerate() {
        for (i, head) in heads.iter_mut().enumerate() {
            head[j] = x[i];
        }
        worst = worst.max(res);
    }
    Ok((heads, worst))
}

/// `[1; v_i; w_i]`.
pub fn assemble_u(heads: &[DVector<Complex64>], tails: &[DVector<Complex64>]) -> Vec<DVector<Complex64>> {
    heads
        .iter()
        .zip(tails)
        .map(|(v, w)| {
            let mut u = Vec::with_capacity(1 + v.len() + w.len());
            u.push(Complex64::new(1.0, 0.0));
            u.extend(v.iter().copied());
            u.extend(w.iter().copied());
            DVector::from_vec(u)
        })
        .collect()
}

/// Fits `T ~ sum_i lambda_i [1; u_i]^{(x) m}` over every `Omega_m` key.
pub fn solve_scales(
    t: &IncompleteSymmetricTensor,
    heads: &[DVector<Complex64>],
    tails: &[DVector<Complex64>],
    params: &DecompositionParams,
) -> Result<(Vec<Complex64>, f64)> {
    let us = assemble_u(heads, tails);
    if us.iter().any(|u| u.len() != t.dim()) {
        return Err(Error::ShapeCondition(
            "heads and tails do not cover the tensor dimension".into(),
        ));
    }
    let keys = omega_keys(t.dim(), t.order())?;
    let mut design = DMatrix::zeros(keys.len(), params.r);
    let mut response = DVector::zeros(keys.len());
    for (row, key) in keys.iter().enumerate() {
        for (i, u) in us.iter().enumerate() {
            design[(row, i)] = key.slots().iter().fold(Complex64::new(1.0, 0.0), |acc, &s| acc * u[s]);
        }
        response[row] = t.require(key.slots())?;
    }
    let (lambda, rep) = lstsq_scaled_vec(&design, &response);
    if rep.rank < params.r {
        return Err(Error::ScalesDegenerate {
            rank: rep.rank,
            r: params.r,
        });
    }
    Ok((lambda.iter().copied().collect(), rep.residual_norm))
}
