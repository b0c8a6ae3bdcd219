use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::log_density;
use super::{GmmModel, SampleSet};
use crate::error::{Error, Result};
use crate::numerics::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Added to every variance after each M-step.
    pub reg_value: f64,
    /// Seeds the random initial responsibilities.
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: 100,
            reg_value: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    /// The iterate with the highest log-likelihood.
    pub model: GmmModel,
    /// Log-likelihood of each iterate, in order.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

const REL_TOL: f64 = 1e-10;

fn m_step(samples: &SampleSet, resp: &[f64], r: usize, reg: f64) -> GmmModel {
    let (n, d) = (samples.len(), samples.dim());
    let mut mass = vec![0.0; r];
    let mut sum = vec![vec![0.0; d]; r];
    let mut sq = vec![vec![0.0; d]; r];
    for (y, g) in samples.rows().zip(resp.chunks_exact(r)) {
        for i in 0..r {
            mass[i] += g[i];
            for j in 0..d {
                sum[i][j] += g[i] * y[j];
                sq[i][j] += g[i] * y[j] * y[j];
            }
        }
    }
    let total: f64 = mass.iter().sum();
    let weights = mass.iter().map(|m| m / total).collect();
    let mut means = vec![vec![0.0; d]; r];
    let mut variances = vec![vec![reg; d]; r];
    for i in 0..r {
        if mass[i] <= f64::MIN_POSITIVE * n as f64 {
            continue;
        }
        for j in 0..d {
            let mu = sum[i][j] / mass[i];
            means[i][j] = mu;
            variances[i][j] = (sq[i][j] / mass[i] - mu * mu).max(0.0) + reg;
        }
    }
    GmmModel {
        weights,
        means,
        variances,
    }
}

// Responsibilities in place; returns the log-likelihood.
fn e_step(model: &GmmModel, samples: &SampleSet, resp: &mut [f64]) -> f64 {
    let r = model.r();
    let mut ll = 0.0;
    for (y, g) in samples.rows().zip(resp.chunks_exact_mut(r)) {
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = log_density(model, i, y, 0.0);
        }
        let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = g.iter().map(|v| (v - top).exp()).sum();
        for gi in g.iter_mut() {
            *gi = (*gi - top).exp() / s;
        }
        ll += top + s.ln();
    }
    ll
}

/// Diagonal-covariance EM started from random responsibilities.
///
/// Iteration stops at `max_iters`, when the relative change falls below
/// `1e-10`, or at the first decrease of the log-likelihood, so the recorded
/// sequence is non-decreasing.
pub fn em_baseline(samples: &SampleSet, r: usize, opts: &EmOptions) -> Result<EmFit> {
    if r == 0 || r > samples.len() {
        return Err(Error::InvalidModel(format!(
            "cannot fit {r} components to {} samples",
            samples.len()
        )));
    }
    let mut rng = stream_rng(opts.seed, 2);
    // normalized exponentials: uniform draws from the simplex
    let mut resp: Vec<f64> = (0..samples.len() * r)
        .map(|_| -(1.0 - rng.random::<f64>()).ln() + f64::MIN_POSITIVE)
        .collect();
    for g in resp.chunks_exact_mut(r) {
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|x| *x /= s);
    }
    let mut lls = Vec::with_capacity(opts.max_iters);
    let mut best: Option<(f64, GmmModel)> = None;
    let mut converged = false;
    for _ in 0..opts.max_iters.max(1) {
        let model = m_step(samples, &resp, r, opts.reg_value);
        let ll = e_step(&model, samples, &mut resp);
        let prev = lls.last().copied();
        // the regularized M-step is not an exact maximizer, so near the
        // fixed point the likelihood can dip; treat that as convergence
        if prev.is_some_and(|p: f64| ll < p - REL_TOL * p.abs()) {
            converged = true;
            break;
        }
        lls.push(ll);
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, model));
        }
        if prev.is_some_and(|p: f64| (ll - p).abs() <= REL_TOL * ll.abs()) {
            converged = true;
            break;
        }
    }
    let (_, model) = best.expect("at least one iteration");
    Ok(EmFit {
        model,
        log_likelihoods: lls,
        converged,
    })
}
