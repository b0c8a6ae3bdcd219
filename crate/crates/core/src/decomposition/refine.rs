use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::combinatorics::TensorKey;
use crate::numerics::{nlls_refine, LeastSquaresProblem, RefineOptions, RefineReport};
use crate::tensor_store::IncompleteSymmetricTensor;

/// `min sum_{key in Omega} |sum_i prod_{s in key} q_i[s] - T[key]|^2` over
/// complex `q_1..q_r`, with parameters `[Re q_1, .., Re q_r, Im q_1, .., Im q_r]`.
pub struct SymmetricFit<'a> {
    keys: &'a [TensorKey],
    targets: Vec<Complex64>,
    r: usize,
    d: usize,
}

impl<'a> SymmetricFit<'a> {
    pub fn new(t: &IncompleteSymmetricTensor, keys: &'a [TensorKey], r: usize) -> crate::Result<Self> {
        let targets = keys.iter().map(|k| t.require(k.slots())).collect::<crate::Result<_>>()?;
        Ok(SymmetricFit {
            keys,
            targets,
            r,
            d: t.dim(),
        })
    }

    pub fn pack(&self, qs: &[DVector<Complex64>]) -> DVector<f64> {
        let rd = self.r * self.d;
        let mut x = DVector::zeros(2 * rd);
        for (i, q) in qs.iter().enumerate() {
            for s in 0..self.d {
                x[i * self.d + s] = q[s].re;
                x[rd + i * self.d + s] = q[s].im;
            }
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>) -> Vec<DVector<Complex64>> {
        let rd = self.r * self.d;
        (0..self.r)
            .map(|i| DVector::from_fn(self.d, |s, _| Complex64::new(x[i * self.d + s], x[rd + i * self.d + s])))
            .collect()
    }
}

impl LeastSquaresProblem for SymmetricFit<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let qs = self.unpack(x);
        let nk = self.keys.len();
        let mut out = DVector::zeros(2 * nk);
        for (row, key) in self.keys.iter().enumerate() {
            let model: Complex64 = qs
                .iter()
                .map(|q| key.slots().iter().fold(Complex64::new(1.0, 0.0), |acc, &s| acc * q[s]))
                .sum();
            let diff = model - self.targets[row];
            out[row] = diff.re;
            out[nk + row] = diff.im;
        }
        out
    }

    // the model is holomorphic in q, so each complex partial c gives the
    // real 2x2 block [[Re c, -Im c], [Im c, Re c]]
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let qs = self.unpack(x);
        let nk = self.keys.len();
        let rd = self.r * self.d;
        let mut jac = DMatrix::zeros(2 * nk, 2 * rd);
        let mut prefix = Vec::new();
        for (row, key) in self.keys.iter().enumerate() {
            let slots = key.slots();
            for (i, q) in qs.iter().enumerate() {
                // leave-one-out products without division
                prefix.clear();
                let mut acc = Complex64::new(1.0, 0.0);
                for &s in slots {
                    prefix.push(acc);
                    acc *= q[s];
                }
                let mut suffix = Complex64::new(1.0, 0.0);
                for (pos, &s) in slots.iter().enumerate().rev() {
                    let c = prefix[pos] * suffix;
                    suffix *= q[s];
                    let col = i * self.d + s;
                    jac[(row, col)] += c.re;
                    jac[(row, rd + col)] -= c.im;
                    jac[(nk + row, col)] += c.im;
                    jac[(nk + row, rd + col)] += c.re;
                }
            }
        }
        Some(jac)
    }
}

/// Refines `qs` against `t` on `keys`.
pub fn refine_components(
    t: &IncompleteSymmetricTensor,
    keys: &[TensorKey],
    qs: &[DVector<Complex64>],
    opts: RefineOptions,
) -> crate::Result<(Vec<DVector<Complex64>>, RefineReport)> {
    let fit = SymmetricFit::new(t, keys, qs.len())?;
    let rep = nlls_refine(&fit, fit.pack(qs), opts);
    Ok((fit.unpack(&rep.x), rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian_vector;
    use crate::tensor_store::{from_components, omega_keys, ComponentList};

    fn random_qs(seed: u64, r: usize, d: usize) -> Vec<DVector<Complex64>> {
        let g = gaussian_vector(seed, 2 * r * d);
        (0..r)
            .map(|i| DVector::from_fn(d, |s, _| Complex64::new(g[2 * (i * d + s)], g[2 * (i * d + s) + 1])))
            .collect()
    }

    fn tensor(qs: &[DVector<Complex64>], m: usize) -> IncompleteSymmetricTensor {
        let d = qs[0].len();
        let comps = ComponentList::new(qs.iter().map(|q| q.iter().copied().collect()).collect());
        from_components(&comps, m, &omega_keys(d, m).unwrap())
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let qs = random_qs(1, 2, 5);
        let t = tensor(&random_qs(2, 2, 5), 3);
        let keys = omega_keys(5, 3).unwrap();
        let fit = SymmetricFit::new(&t, &keys, 2).unwrap();
        let x = fit.pack(&qs);
        assert_eq!(fit.unpack(&x), qs);
        let jac = fit.jacobian(&x).unwrap();
        let r0 = fit.residuals(&x);
        let h = 1e-7;
        for col in 0..x.len() {
            let mut xh = x.clone();
            xh[col] += h;
            let fd = (fit.residuals(&xh) - &r0) / h;
            assert!((fd - jac.column(col)).amax() < 1e-5, "column {col}");
        }
    }

    #[test]
    fn exact_start_is_a_fixed_point() {
        let qs = random_qs(3, 3, 7);
        let t = tensor(&qs, 4);
        let keys = omega_keys(7, 4).unwrap();
        let (out, rep) = refine_components(&t, &keys, &qs, RefineOptions::default()).unwrap();
        assert!(rep.objective <= rep.initial_objective);
        for (a, b) in out.iter().zip(&qs) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn perturbed_start_returns_to_truth() {
        let qs = random_qs(4, 2, 6);
        let t = tensor(&qs, 3);
        let keys = omega_keys(6, 3).unwrap();
        let start: Vec<_> = qs
            .iter()
            .zip(random_qs(5, 2, 6))
            .map(|(q, e)| q + e * Complex64::new(1e-3, 0.0))
            .collect();
        let (_, rep) = refine_components(&t, &keys, &start, RefineOptions::default()).unwrap();
        assert!(rep.objective < 1e-20, "objective {}", rep.objective);
    }
}
