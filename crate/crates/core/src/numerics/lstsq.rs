use nalgebra::{ComplexField, DMatrix, DVector, SVD};

/// Condition estimate above which a solve is flagged.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Result of a least-squares solve.
#[derive(Debug, Clone)]
pub struct LstsqReport<T: ComplexField> {
    pub solution: DMatrix<T>,
    /// Frobenius norm of `A x - b`.
    pub residual_norm: f64,
    /// Numerical rank of `A`.
    pub rank: usize,
    /// Ratio of extreme singular values.
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Minimum-norm least-squares solution of `A x = b` via the SVD.
///
/// Singular values below `max(rows, cols) * eps * s_max` are treated as zero.
pub fn lstsq<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> LstsqReport<T>
where
    T: ComplexField<RealField = f64>,
{
    assert!(a.ncols() >= 1, "lstsq needs at least one column");
    assert_eq!(a.nrows(), b.nrows(), "row mismatch");
    if a.nrows() == 0 {
        return LstsqReport {
            solution: DMatrix::zeros(a.ncols(), b.ncols()),
            residual_norm: 0.0,
            rank: 0,
            condition: f64::INFINITY,
            ill_conditioned: true,
        };
    }
    let svd = SVD::new(a.clone(), true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * s_max;
    let rank = s.iter().filter(|&&x| x > tol).count();
    let solution = if rank == 0 {
        DMatrix::zeros(a.ncols(), b.ncols())
    } else {
        svd.solve(b, tol).expect("SVD computed with both factors")
    };
    let residual_norm = (a * &solution - b).norm();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    // wide systems are underdetermined rather than ill-conditioned
    let ill_conditioned = a.nrows() >= a.ncols() && condition > ILL_CONDITIONED;
    LstsqReport {
        solution,
        residual_norm,
        rank,
        condition,
        ill_conditioned,
    }
}

/// Single right-hand-side convenience wrapper.
pub fn lstsq_vec<T>(a: &DMatrix<T>, b: &DVector<T>) -> (DVector<T>, LstsqReport<T>)
where
    T: ComplexField<RealField = f64>,
{
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let rep = lstsq(a, &bm);
    (rep.solution.column(0).into_owned(), rep)
}

/// [`lstsq`] after scaling every nonzero column of `A` to unit norm.
///
/// Rank and conditioning refer to the scaled matrix, so columns that differ
/// only in magnitude are not mistaken for a rank deficiency.
pub fn lstsq_scaled<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> LstsqReport<T>
where
    T: ComplexField<RealField = f64>,
{
    let norms: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 && n.is_finite() {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, &n) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(n);
    }
    let mut rep = lstsq(&scaled, b);
    for (j, &n) in norms.iter().enumerate() {
        rep.solution.row_mut(j).unscale_mut(n);
    }
    rep
}

/// Single right-hand-side form of [`lstsq_scaled`].
pub fn lstsq_scaled_vec<T>(a: &DMatrix<T>, b: &DVector<T>) -> (DVector<T>, LstsqReport<T>)
where
    T: ComplexField<RealField = f64>,
{
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let rep = lstsq_scaled(a, &bm);
    (rep.solution.column(0).into_owned(), rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian_vector;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn examples() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let (x, rep) = lstsq_vec(&a, &DVector::from_vec(vec![1.0, 3.0]));
        assert!((x[0] - 2.0).abs() < 1e-14);
        assert!((rep.residual_norm - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(rep.rank, 1);

        let a = DMatrix::<Complex64>::identity(2, 2);
        let b = DVector::from_vec(vec![c(0., 1.), c(1., 0.)]);
        let (x, _) = lstsq_vec(&a, &b);
        assert!((x - b).norm() < 1e-15);

        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (x, rep) = lstsq_vec(&a, &DVector::from_vec(vec![2.0]));
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!(!rep.ill_conditioned);
    }

    #[test]
    fn rank_deficient_is_flagged() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let rep = lstsq(&a, &DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]));
        assert_eq!(rep.rank, 1);
        assert!(rep.ill_conditioned);
        // min-norm: x proportional to (1, 2)
        let x = rep.solution.column(0);
        assert!((x[1] - 2.0 * x[0]).abs() < 1e-12);
    }

    #[test]
    fn scaling_rescues_disparate_columns() {
        let a = DMatrix::from_row_slice(3, 2, &[1e-9, 1e9, 2e-9, -1e9, 0.0, 3e9]);
        let b = DVector::from_vec(vec![1.0, 2.0, 0.0]);
        let (_, plain) = lstsq_vec(&a, &b);
        assert_eq!(plain.rank, 1);
        let (x, rep) = lstsq_scaled_vec(&a, &b);
        assert_eq!(rep.rank, 2);
        assert!(((&a * &x) - &b).norm() <= plain.residual_norm + 1e-12);
        assert!((x[0] - 1e9).abs() < 1e-3);
    }

    #[test]
    fn residual_orthogonal_to_column_space() {
        for seed in 0..20u64 {
            let (m, n) = (12, 5);
            let g = gaussian_vector(seed, 2 * (m * n + m));
            let a = DMatrix::from_fn(m, n, |i, j| c(g[2 * (i * n + j)], g[2 * (i * n + j) + 1]));
            let off = 2 * m * n;
            let b = DVector::from_fn(m, |i, _| c(g[off + 2 * i], g[off + 2 * i + 1]));
            let (x, _) = lstsq_vec(&a, &b);
            let grad = a.adjoint() * (&a * x - &b);
            assert!(grad.norm() <= 1e-10 * a.norm() * b.norm());
        }
    }
}
