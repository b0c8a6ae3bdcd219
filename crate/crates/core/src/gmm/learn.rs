use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::moments::{exact_moments, sample_moments, MomentSet};
use super::{GmmModel, SampleSet};
use crate::combinatorics::{binomial, TensorKey};
use crate::decomposition::{approximate, choose_params, DecompositionParams};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, lstsq_scaled_vec, nnls, simplex_nlls, RefineOptions, SimplexFit};
use crate::tensor_store::{covariance_keys, omega_keys, IncompleteSymmetricTensor};

const BETA_FLOOR: f64 = 1e-12;

/// Smallest `t` with `C(d, t) >= r`; it must stay below `m`.
pub fn weight_order(d: usize, r: usize, m: usize) -> Result<usize> {
    let t = (0..=d)
        .find(|&t| binomial(d as u64, t as u64).is_ok_and(|c| c >= r as u64))
        .ok_or(Error::RankTooLarge { r, max: 0 })?;
    if t >= m {
        return Err(Error::OrderConflict { t, m });
    }
    Ok(t)
}

// For even m the m-th roots of unity include -1, so realify cannot see the
// sign of a component. An odd-order moment with enough distinct keys can.
fn sign_order(d: usize, r: usize, m: usize, t: usize) -> Option<usize> {
    if m % 2 == 1 {
        return None;
    }
    if t % 2 == 1 {
        return Some(t);
    }
    (1..=d)
        .step_by(2)
        .find(|&s| binomial(d as u64, s as u64).is_ok_and(|c| c >= r as u64))
}

/// Which moments the learner needs for a given `(d, r, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPlan {
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub t: usize,
    /// Odd order used to fix component signs when `m` is even.
    pub sign_order: Option<usize>,
    pub high_keys: Vec<TensorKey>,
    pub aux_keys: Vec<TensorKey>,
    pub sign_keys: Vec<TensorKey>,
}

impl MomentPlan {
    pub fn new(d: usize, r: usize, m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::ShapeCondition(format!("moment order m = {m} must be at least 3")));
        }
        if d < m {
            return Err(Error::OrderExceedsDim { m, d });
        }
        let t = weight_order(d, r, m)?;
        let mut high_keys = omega_keys(d, m)?;
        high_keys.extend(covariance_keys(d, m).concat());
        let aux_keys = omega_keys(d, t)?;
        let sign_order = sign_order(d, r, m, t);
        let sign_keys = match sign_order {
            Some(s) if s != t => omega_keys(d, s)?,
            _ => Vec::new(),
        };
        Ok(MomentPlan {
            d,
            r,
            m,
            t,
            sign_order,
            high_keys,
            aux_keys,
            sign_keys,
        })
    }

    fn collect(&self, f: impl Fn(&[TensorKey]) -> Result<MomentSet>) -> Result<MixtureMoments> {
        let high = f(&self.high_keys)?;
        let aux = f(&self.aux_keys)?;
        let sign = if self.sign_keys.is_empty() {
            None
        } else {
            Some(f(&self.sign_keys)?)
        };
        Ok(MixtureMoments { high, aux, sign })
    }

    pub fn from_samples(&self, samples: &SampleSet) -> Result<MixtureMoments> {
        if samples.dim() != self.d {
            return Err(Error::InvalidModel(format!(
                "samples have dimension {}, plan expects {}",
                samples.dim(),
                self.d
            )));
        }
        self.collect(|keys| sample_moments(samples, keys))
    }

    pub fn exact(&self, model: &GmmModel) -> Result<MixtureMoments> {
        if model.dim() != self.d {
            return Err(Error::InvalidModel(format!(
                "model has dimension {}, plan expects {}",
                model.dim(),
                self.d
            )));
        }
        self.collect(|keys| exact_moments(model, keys))
    }
}

/// `M_m` on `Omega_m` and the repeated-pair keys, `M_t` on `Omega_t`, and an
/// optional odd-order set for sign alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMoments {
    pub high: MomentSet,
    pub aux: MomentSet,
    pub sign: Option<MomentSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    /// Seed for the random eigenvector combination of the decomposition.
    pub seed: u64,
    pub refine_opts: RefineOptions,
    /// Decomposition runs allowed when a component weight collapses.
    pub attempts: usize,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            seed: 0,
            refine_opts: RefineOptions::default(),
            attempts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub params: DecompositionParams,
    /// Decomposition runs needed before the weight fit succeeded.
    pub attempts: usize,
    pub t: usize,
    pub decomp_err: f64,
    pub beta: Vec<f64>,
    pub flipped: Vec<usize>,
    pub refine_initial_objective: f64,
    pub refine_objective: f64,
}

fn root_of_unity(t: usize, m: usize) -> Complex64 {
    let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * t as f64 / m as f64);
    // exact zeros keep quarter turns exact, so ties compare equal
    let snap = |x: f64| if x.abs() < 1e-15 { 0.0 } else { x };
    Complex64::new(snap(z.re), snap(z.im))
}

/// `Re(eta q)` for the `m`-th root of unity `eta` with the smallest
/// `||Im(eta q)||`; ties go to the earliest root.
pub fn realify(qs: &[DVector<Complex64>], m: usize) -> Vec<Vec<f64>> {
    assert!(m >= 1);
    let roots: Vec<Complex64> = (0..m).map(|t| root_of_unity(t, m)).collect();
    qs.iter()
        .map(|q| {
            let imag = |eta: Complex64| q.iter().map(|z| (eta * z).im.powi(2)).sum::<f64>().sqrt();
            let norms: Vec<f64> = roots.iter().map(|&eta| imag(eta)).collect();
            let mut best = 0;
            for (t, &n) in norms.iter().enumerate().skip(1) {
                if n < norms[best] {
                    best = t;
                }
            }
            assert!(norms.iter().all(|&n| norms[best] <= n), "phase choice is not minimal");
            q.iter().map(|z| (roots[best] * z).re).collect()
        })
        .collect()
}

fn product(v: &[f64], key: &TensorKey) -> f64 {
    key.slots().iter().map(|&s| v[s]).product()
}

fn design(vectors: &[Vec<f64>], keys: &[TensorKey]) -> DMatrix<f64> {
    DMatrix::from_fn(keys.len(), vectors.len(), |row, i| product(&vectors[i], &keys[row]))
}

fn targets(ms: &MomentSet, keys: &[TensorKey]) -> Result<DVector<f64>> {
    let vals = keys.iter().map(|k| ms.get(k)).collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

// Fits an odd-order moment with free coefficients; a negative coefficient
// means the component points the wrong way.
fn align_signs(qs: &mut [Vec<f64>], ms: &MomentSet) -> Result<Vec<usize>> {
    let keys = omega_keys(ms.d, ms.order)?;
    let (coef, _) = lstsq_scaled_vec(&design(qs, &keys), &targets(ms, &keys)?);
    let mut flipped = Vec::new();
    for (i, q) in qs.iter_mut().enumerate() {
        if coef[i] < 0.0 {
            q.iter_mut().for_each(|x| *x = -*x);
            flipped.push(i);
        }
    }
    Ok(flipped)
}

/// Nonnegative fit of `M_t` on `Omega_t` by `sum_i beta_i q_i^{(x) t}`, then
/// `omega_i = beta_i^{m/(m-t)}` and `mu_i = q_i / beta_i^{1/(m-t)}`.
///
/// The weights are returned as solved; callers normalize them.
pub fn recover_weights(qs: &[Vec<f64>], mt: &MomentSet, m: usize, t: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let beta = solve_beta(qs, mt, m, t)?;
    Ok(weights_from_beta(qs, &beta, m, t))
}

fn solve_beta(qs: &[Vec<f64>], mt: &MomentSet, m: usize, t: usize) -> Result<Vec<f64>> {
    if t >= m {
        return Err(Error::OrderConflict { t, m });
    }
    if mt.order != t {
        return Err(Error::InvalidTensor(format!("moment order {} given for t = {t}", mt.order)));
    }
    let keys = omega_keys(mt.d, t)?;
    let beta = nnls(&design(qs, &keys), &targets(mt, &keys)?)?.x;
    if let Some(i) = beta.iter().position(|&b| !(b >= BETA_FLOOR)) {
        return Err(Error::DegenerateWeight(i));
    }
    Ok(beta.as_slice().to_vec())
}

fn weights_from_beta(qs: &[Vec<f64>], beta: &[f64], m: usize, t: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let gap = (m - t) as f64;
    let omega = beta.iter().map(|b| b.powf(m as f64 / gap)).collect();
    let mu = qs
        .iter()
        .zip(beta)
        .map(|(q, b)| {
            let s = b.powf(1.0 / gap);
            q.iter().map(|x| x / s).collect()
        })
        .collect();
    (omega, mu)
}

fn distinct(ms: &MomentSet) -> (Vec<TensorKey>, Vec<f64>) {
    ms.values
        .iter()
        .filter(|(k, _)| k.is_distinct())
        .map(|(k, v)| (k.clone(), *v))
        .unzip()
}

/// Simplex-constrained least squares on `M_m` and `M_t` over their
/// distinct-index keys, started from `(omega0, mu0)`.
pub fn refine_params(omega0: &[f64], mu0: &[Vec<f64>], mm: &MomentSet, mt: &MomentSet, opts: RefineOptions) -> SimplexFit {
    let (hk, hv) = distinct(mm);
    let (ak, av) = distinct(mt);
    let residual = |omega: &[f64], mu: &[Vec<f64>]| {
        let eval = |k: &TensorKey| omega.iter().zip(mu).map(|(w, v)| w * product(v, k)).sum::<f64>();
        let high = hk.iter().zip(&hv).map(|(k, v)| eval(k) - v);
        let aux = ak.iter().zip(&av).map(|(k, v)| eval(k) - v);
        DVector::from_iterator(hk.len() + ak.len(), high.chain(aux))
    };
    simplex_nlls(residual, omega0, mu0, opts)
}

/// Variances from the repeated-pair keys: for coordinate `j`, the residual
/// `M_m - sum_i q_i^{(x) m}` on keys `(j, j, rest)` is fitted by
/// `sum_i theta_ij omega_i prod_{s in rest} mu_i[s]` with `theta >= 0`.
pub fn recover_covariances(mm: &MomentSet, qs: &[Vec<f64>], omega: &[f64], mu: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (d, m, r) = (mm.d, mm.order, qs.len());
    if m < 3 {
        return Err(Error::ShapeCondition(format!("moment order m = {m} must be at least 3")));
    }
    let mut variances = vec![vec![0.0; d]; r];
    for (j, keys) in covariance_keys(d, m).iter().enumerate() {
        let response = keys
            .iter()
            .map(|k| Ok(mm.get(k)? - qs.iter().map(|q| product(q, k)).sum::<f64>()))
            .collect::<Result<Vec<_>>>()?;
        let a = DMatrix::from_fn(keys.len(), r, |row, i| {
            let rest = keys[row].slots().iter().filter(|&&s| s != j);
            omega[i] * rest.map(|&s| mu[i][s]).product::<f64>()
        });
        let (_, rep) = lstsq_scaled_vec(&a, &DVector::zeros(keys.len()));
        if rep.rank < r {
            return Err(Error::CovDesignDegenerate(j));
        }
        let theta = nnls(&a, &DVector::from_vec(response))?.x;
        for i in 0..r {
            variances[i][j] = theta[i];
        }
    }
    Ok(variances)
}

fn distinct_tensor(ms: &MomentSet) -> Result<IncompleteSymmetricTensor> {
    let mut t = IncompleteSymmetricTensor::new(ms.d, ms.order);
    for (k, &v) in ms.values.iter().filter(|(k, _)| k.is_distinct()) {
        t.insert(k.slots().to_vec(), Complex64::new(v, 0.0))?;
    }
    Ok(t)
}

/// Runs the moment pipeline on precomputed moments.
pub fn learn_from_moments(moments: &MixtureMoments, r: usize, opts: &LearnOptions) -> Result<(GmmModel, LearnReport)> {
    let (d, m) = (moments.high.d, moments.high.order);
    let t = moments.aux.order;
    if m < 3 {
        return Err(Error::ShapeCondition(format!("moment order m = {m} must be at least 3")));
    }
    let base = choose_params(d - 1, m, r).map_err(|e| e.in_stage("parameters"))?;
    let tensor = distinct_tensor(&moments.high)?;

    // A noisy tensor can pull two components onto the same vector, which the
    // weight fit then zeroes out; a fresh random start usually avoids it.
    let mut attempt = 0;
    let (params, dec, qs, flipped, beta) = loop {
        let seed = if attempt == 0 {
            opts.seed
        } else {
            derive_seed(opts.seed, attempt as u64)
        };
        let params = base.with_seed(seed);
        let dec = approximate(&tensor, &params).map_err(|e| e.in_stage("tensor approximation"))?;
        let mut qs = realify(&dec.components, m);
        let flipped = match (m % 2, &moments.sign) {
            (0, Some(s)) => align_signs(&mut qs, s),
            (0, None) if t % 2 == 1 => align_signs(&mut qs, &moments.aux),
            _ => Ok(Vec::new()),
        }
        .map_err(|e| e.in_stage("sign alignment"))?;
        attempt += 1;
        match solve_beta(&qs, &moments.aux, m, t) {
            Ok(beta) => break (params, dec, qs, flipped, beta),
            Err(Error::DegenerateWeight(i)) if attempt < opts.attempts.max(1) => {
                log::debug!("attempt {attempt}: weight {i} collapsed, retrying");
            }
            Err(e) => return Err(e.in_stage("weights")),
        }
    };
    let (omega_hat, mu_hat) = weights_from_beta(&qs, &beta, m, t);
    let total: f64 = omega_hat.iter().sum();
    let omega_hat: Vec<f64> = omega_hat.iter().map(|w| w / total).collect();

    let fit = refine_params(&omega_hat, &mu_hat, &moments.high, &moments.aux, opts.refine_opts);
    let variances = recover_covariances(&moments.high, &qs, &fit.omega, &fit.mu).map_err(|e| e.in_stage("covariances"))?;
    let model = GmmModel::new(fit.omega.clone(), fit.mu.clone(), variances)?;
    let report = LearnReport {
        params,
        attempts: attempt,
        t,
        decomp_err: dec.diagnostics.decomp_err,
        beta,
        flipped,
        refine_initial_objective: fit.initial_objective,
        refine_objective: fit.objective,
    };
    Ok((model, report))
}

/// Moment-based learning of an `r`-component diagonal mixture from samples,
/// using order-`m` moments.
pub fn learn(samples: &SampleSet, r: usize, m: usize) -> Result<GmmModel> {
    learn_with(samples, r, m, &LearnOptions::default()).map(|(model, _)| model)
}

pub fn learn_with(samples: &SampleSet, r: usize, m: usize, opts: &LearnOptions) -> Result<(GmmModel, LearnReport)> {
    let plan = MomentPlan::new(samples.dim(), r, m).map_err(|e| e.in_stage("moment plan"))?;
    let moments = plan.from_samples(samples).map_err(|e| e.in_stage("moments"))?;
    learn_from_moments(&moments, r, opts)
}
