//! Seeded single-trial runners behind the experiment tables.

use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decomposition::{approximate, approximation_errors, choose_params, decompose, vec_err_max};
use crate::error::Result;
use crate::gmm::{accuracy, classify, em_baseline, learn_with, sample_gmm, EmOptions, GmmModel, LearnOptions};
use crate::numerics::{derive_seed, gaussian_vector};
use crate::tensor_store::{from_components, omega_keys, perturb, ComponentList, IncompleteSymmetricTensor};

/// `sum_i q_i^{(x) m}` on `Omega_m` for real Gaussian `q_i`.
pub fn planted_tensor(d: usize, m: usize, r: usize, seed: u64) -> Result<(IncompleteSymmetricTensor, Vec<DVector<Complex64>>)> {
    let g = gaussian_vector(seed, r * d);
    let qs: Vec<Vec<f64>> = g.chunks(d).map(<[f64]>::to_vec).collect();
    let t = from_components(&ComponentList::from_real(&qs), m, &omega_keys(d, m)?);
    let comps = qs
        .iter()
        .map(|q| DVector::from_iterator(d, q.iter().map(|&x| Complex64::new(x, 0.0))))
        .collect();
    Ok((t, comps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactTrial {
    pub decomp_err: f64,
    pub vec_err_max: f64,
    pub seconds: f64,
}

/// Plants a rank-`r` tensor and decomposes it without refinement.
pub fn exact_trial(d: usize, m: usize, r: usize, seed: u64) -> Result<ExactTrial> {
    let (t, truth) = planted_tensor(d, m, r, seed)?;
    let start = Instant::now();
    let params = choose_params(d - 1, m, r)?.with_seed(derive_seed(seed, 1));
    let dec = decompose(&t, &params)?;
    Ok(ExactTrial {
        decomp_err: dec.diagnostics.decomp_err,
        vec_err_max: vec_err_max(&truth, &dec.components, m),
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxTrial {
    pub abs_err: f64,
    pub rel_err: f64,
    pub seconds: f64,
}

/// Plants a rank-`r` tensor, adds noise of norm `epsilon` and approximates.
pub fn approx_trial(d: usize, m: usize, r: usize, epsilon: f64, seed: u64) -> Result<ApproxTrial> {
    let (clean, _) = planted_tensor(d, m, r, seed)?;
    let noisy = perturb(&clean, epsilon, derive_seed(seed, 2));
    let start = Instant::now();
    let params = choose_params(d - 1, m, r)?.with_seed(derive_seed(seed, 1));
    let fit = approximate(&noisy, &params)?;
    let errs = approximation_errors(&fit, &clean, &noisy)?;
    Ok(ApproxTrial {
        abs_err: errs.abs_err,
        rel_err: errs.rel_err,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmTrial {
    /// `None` when the moment method raised; see `moment_error`.
    pub moment: Option<f64>,
    pub moment_error: Option<String>,
    pub em: f64,
    pub moment_seconds: f64,
    pub em_seconds: f64,
}

/// Draws `n` samples from a random model and scores both learners.
pub fn gmm_trial(d: usize, m: usize, r: usize, n: usize, seed: u64) -> Result<GmmTrial> {
    let model = GmmModel::random(d, r, seed);
    let samples = sample_gmm(&model, n, derive_seed(seed, 1))?;
    let truth = samples.labels.clone().expect("sampled sets carry labels");

    let start = Instant::now();
    let learned = learn_with(
        &samples,
        r,
        m,
        &LearnOptions {
            seed: derive_seed(seed, 2),
            ..Default::default()
        },
    );
    let moment_seconds = start.elapsed().as_secs_f64();
    let (moment, moment_error) = match learned {
        Ok((fit, _)) => (Some(accuracy(&classify(&fit, &samples), &truth)), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let start = Instant::now();
    let em = em_baseline(
        &samples,
        r,
        &EmOptions {
            seed: derive_seed(seed, 3),
            ..Default::default()
        },
    )?;
    let em_seconds = start.elapsed().as_secs_f64();
    let em = accuracy(&classify(&em.model, &samples), &truth);
    Ok(GmmTrial {
        moment,
        moment_error,
        em,
        moment_seconds,
        em_seconds,
    })
}

/// Min, mean, median and max of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    Some(Summary {
        min: v[0],
        mean: v.iter().sum::<f64>() / n as f64,
        median,
        max: v[n - 1],
    })
}
