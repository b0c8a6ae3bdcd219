use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenvalues with unit-norm eigenvectors, sorted by real then imaginary part.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<Complex64>,
    pub vectors: Vec<DVector<Complex64>>,
}

const MAX_SCHUR_ITERS: usize = 10_000;

/// Full eigendecomposition of a square complex matrix.
///
/// Eigenvectors come from back-substitution on the complex Schur form.
pub fn eig(m: &DMatrix<Complex64>) -> Result<EigenPairs> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eig needs a square matrix");
    if n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let scale = m.norm();
    if !scale.is_finite() {
        return Err(Error::EigenFailure);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, MAX_SCHUR_ITERS).ok_or(Error::EigenFailure)?;
    let (q, t) = schur.unpack();
    let floor = f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    let mut pairs: Vec<(Complex64, DVector<Complex64>)> = (0..n)
        .map(|i| {
            let lambda = t[(i, i)];
            let mut y = DVector::<Complex64>::zeros(n);
            y[i] = Complex64::new(1.0, 0.0);
            for j in (0..i).rev() {
                let s: Complex64 = (j + 1..=i).map(|l| t[(j, l)] * y[l]).sum();
                let mut denom = t[(j, j)] - lambda;
                if denom.norm() < floor {
                    denom = Complex64::new(floor, 0.0);
                }
                y[j] = -s / denom;
            }
            let mut v = &q * y;
            let nv = v.norm();
            v /= Complex64::new(nv, 0.0);
            (lambda, v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let (values, vectors) = pairs.into_iter().unzip();
    Ok(EigenPairs { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian_vector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn real(n: usize, v: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(n, n, &v.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn diagonal() {
        let e = eig(&real(2, &[2.0, 0.0, 0.0, 5.0])).unwrap();
        assert!((e.values[0] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((e.values[1] - c(5.0, 0.0)).norm() < 1e-14);
        assert!((e.vectors[0][0].norm() - 1.0).abs() < 1e-14);
        assert!((e.vectors[1][1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_swap() {
        let e = eig(&real(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((e.values[0] - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((e.values[1] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let e = eig(&real(2, &[0.0, -1.0, 1.0, 0.0])).unwrap();
        assert!(e.values[0].re.abs() < 1e-14 && e.values[1].re.abs() < 1e-14);
        let mut ims: Vec<f64> = e.values.iter().map(|v| v.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 1.0).abs() < 1e-14 && (ims[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn residuals_on_random_complex_matrices() {
        for seed in 0..10u64 {
            let n = 20;
            let g = gaussian_vector(seed, 2 * n * n);
            let m = DMatrix::from_fn(n, n, |i, j| c(g[2 * (i * n + j)], g[2 * (i * n + j) + 1]));
            let e = eig(&m).unwrap();
            assert_eq!(e.values.len(), n);
            for (l, v) in e.values.iter().zip(&e.vectors) {
                assert!((v.norm() - 1.0).abs() < 1e-12);
                let res = (&m * v - v * *l).norm();
                assert!(res <= 1e-10 * m.norm(), "seed {seed}: residual {res}");
            }
        }
    }
}
