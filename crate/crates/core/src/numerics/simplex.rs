use nalgebra::DVector;

use super::lm::{nlls_refine, RefineOptions};

/// Output of [`simplex_nlls`].
#[derive(Debug, Clone)]
pub struct SimplexFit {
    pub omega: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub initial_objective: f64,
    pub objective: f64,
}

fn unpack(x: &DVector<f64>, r: usize, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let t2: Vec<f64> = x.as_slice()[..r].iter().map(|t| t * t).collect();
    let total: f64 = t2.iter().sum();
    let omega = if total > 0.0 {
        t2.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / r as f64; r]
    };
    let mu = (0..r).map(|i| x.as_slice()[r + i * d..r + (i + 1) * d].to_vec()).collect();
    (omega, mu)
}

/// Minimizes `||residual(omega, mu)||^2` over `mu` and `omega` on the
/// probability simplex.
///
/// The weights are reparameterized as `omega_i = t_i^2 / sum_j t_j^2`, which
/// turns the problem into an unconstrained one for [`nlls_refine`].
pub fn simplex_nlls<F>(residual: F, omega0: &[f64], mu0: &[Vec<f64>], opts: RefineOptions) -> SimplexFit
where
    F: Fn(&[f64], &[Vec<f64>]) -> DVector<f64>,
{
    let r = omega0.len();
    assert_eq!(r, mu0.len());
    assert!(r >= 1);
    let d = mu0[0].len();
    let mut x0 = Vec::with_capacity(r + r * d);
    let total: f64 = omega0.iter().map(|w| w.max(0.0)).sum();
    x0.extend(omega0.iter().map(|w| (w.max(0.0) / total).sqrt()));
    for m in mu0 {
        assert_eq!(m.len(), d);
        x0.extend_from_slice(m);
    }
    let problem = |x: &DVector<f64>| {
        let (omega, mu) = unpack(x, r, d);
        residual(&omega, &mu)
    };
    let rep = nlls_refine(&problem, DVector::from_vec(x0), opts);
    let (omega, mu) = unpack(&rep.x, r, d);
    SimplexFit {
        omega,
        mu,
        initial_objective: rep.initial_objective,
        objective: rep.objective,
    }
}
