use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Stopping rules for [`nlls_refine`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Stop once `||J^T r||_inf` falls to this value.
    pub grad_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_iters: 200,
            grad_tol: 1e-10,
        }
    }
}

/// A residual map `x -> r(x)` with an optional analytic Jacobian.
pub trait LeastSquaresProblem {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian; `None` selects forward differences.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

impl<F> LeastSquaresProblem for F
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        self(x)
    }
}

#[derive(Debug, Clone)]
pub struct RefineReport {
    pub x: DVector<f64>,
    /// `||r(x0)||^2`
    pub initial_objective: f64,
    /// `||r(x)||^2` at the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn forward_difference<P: LeastSquaresProblem + ?Sized>(p: &P, x: &DVector<f64>, r: &DVector<f64>) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(r.len(), x.len());
    let mut xh = x.clone();
    for j in 0..x.len() {
        let h = f64::EPSILON.sqrt() * x[j].abs().max(1.0);
        xh[j] = x[j] + h;
        let rh = p.residuals(&xh);
        jac.set_column(j, &((rh - r) / h));
        xh[j] = x[j];
    }
    jac
}

// an explicit transpose lets the product use the blocked matrix kernel
fn normal_matrix(jac: &DMatrix<f64>) -> DMatrix<f64> {
    jac.transpose() * jac
}

fn jacobian_at<P: LeastSquaresProblem + ?Sized>(p: &P, x: &DVector<f64>, r: &DVector<f64>) -> DMatrix<f64> {
    p.jacobian(x).unwrap_or_else(|| forward_difference(p, x, r))
}

/// Damped Gauss–Newton (Levenberg–Marquardt) refinement of `min ||r(x)||^2`.
///
/// Only steps that strictly decrease the objective are accepted, so the
/// returned objective never exceeds the starting one.
pub fn nlls_refine<P: LeastSquaresProblem + ?Sized>(problem: &P, x0: DVector<f64>, opts: RefineOptions) -> RefineReport {
    let mut x = x0;
    let mut r = problem.residuals(&x);
    let initial_objective = r.norm_squared();
    let mut f = initial_objective;
    if x.is_empty() || !f.is_finite() {
        return RefineReport {
            x,
            initial_objective,
            objective: f,
            iterations: 0,
            converged: true,
        };
    }

    let mut jac = jacobian_at(problem, &x, &r);
    let mut jtj = normal_matrix(&jac);
    let mut grad = jac.tr_mul(&r);
    let mut mu = 1e-3 * jtj.diagonal().max().max(f64::MIN_POSITIVE);
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        if grad.amax() <= opts.grad_tol || f == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let mut damped = jtj.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += mu;
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        if step.norm() <= 1e-15 * (x.norm() + 1e-15) {
            converged = true;
            break;
        }
        let x_new = &x + &step;
        let r_new = problem.residuals(&x_new);
        let f_new = r_new.norm_squared();
        let predicted = step.dot(&(mu * &step - &grad));
        if f_new.is_finite() && f_new < f {
            let rho = (f - f_new) / predicted.max(f64::MIN_POSITIVE);
            x = x_new;
            r = r_new;
            f = f_new;
            jac = jacobian_at(problem, &x, &r);
            jtj = normal_matrix(&jac);
            grad = jac.tr_mul(&r);
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                break;
            }
        }
    }
    debug_assert!(f <= initial_objective);
    RefineReport {
        x,
        initial_objective,
        objective: f,
        iterations,
        converged,
    }
}
