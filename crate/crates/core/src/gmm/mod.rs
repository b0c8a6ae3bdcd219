//! Diagonal Gaussian mixtures: sampling, moments, moment-based learning and
//! an EM baseline.

mod em;
mod learn;
mod metrics;
mod moments;

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::stream_rng;

pub use em::{em_baseline, EmFit, EmOptions};
pub use learn::{
    learn, learn_from_moments, learn_with, realify, recover_covariances, recover_weights, refine_params, weight_order,
    LearnOptions, LearnReport, MixtureMoments, MomentPlan,
};
pub use metrics::{accuracy, classify, parameter_error, CLASSIFY_VARIANCE_FLOOR};
pub use moments::{exact_moments, sample_moments, univariate_gaussian_moment, MomentSet};

/// Weights on the simplex, means and diagonal variances of `r` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    r: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

const SIMPLEX_TOL: f64 = 1e-9;

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let model = GmmModel {
            weights,
            means,
            variances,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn r(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.r();
        if r == 0 {
            return Err(Error::InvalidModel("no components".into()));
        }
        if self.means.len() != r || self.variances.len() != r {
            return Err(Error::InvalidModel("weights, means and variances disagree on r".into()));
        }
        let d = self.dim();
        if d == 0 || self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(Error::InvalidModel("component vectors must share a positive length".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidModel("weights must be finite and nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {total}, not 1")));
        }
        if self.means.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("means must be finite".into()));
        }
        if self.variances.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidModel("variances must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Random model: normalized uniform weights, standard normal means and
    /// squared standard normal variances.
    pub fn random(d: usize, r: usize, seed: u64) -> Self {
        assert!(d >= 1 && r >= 1);
        let mut rng = stream_rng(seed, 0);
        let raw: Vec<f64> = (0..r).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        let means = (0..r).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let variances = (0..r)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * z
                    })
                    .collect()
            })
            .collect();
        GmmModel {
            weights,
            means,
            variances,
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> std::io::Result<()> {
        let file = ModelFile {
            r: self.r(),
            weights: self.weights.clone(),
            means: self.means.clone(),
            variances: self.variances.clone(),
        };
        serde_json::to_writer_pretty(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r).map_err(|e| Error::InvalidModel(format!("model file: {e}")))?;
        if file.r != file.weights.len() {
            return Err(Error::InvalidModel(format!(
                "r = {} but {} weights",
                file.r,
                file.weights.len()
            )));
        }
        GmmModel::new(file.weights, file.means, file.variances)
    }
}

/// `N x d` draws stored row-major, with the generating components when known.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    d: usize,
    data: Vec<f64>,
    pub labels: Option<Vec<usize>>,
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(Error::InvalidModel(format!(
                "{} values do not form rows of width {d}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("samples must be finite".into()));
        }
        Ok(SampleSet {
            d,
            data,
            labels: None,
            seed: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidModel("ragged sample rows".into()));
        }
        SampleSet::new(d, rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidModel(format!(
                "{} labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Draws `n` samples: a component from the weights, then independent
/// normal coordinates.
pub fn sample_gmm(model: &GmmModel, n: usize, seed: u64) -> Result<SampleSet> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidModel("sample count must be positive".into()));
    }
    let d = model.dim();
    let pick = WeightedIndex::new(&model.weights).map_err(|e| Error::InvalidModel(e.to_string()))?;
    let sd: Vec<Vec<f64>> = model.variances.iter().map(|v| v.iter().map(|x| x.sqrt()).collect()).collect();
    let mut rng = stream_rng(seed, 1);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let i = pick.sample(&mut rng);
        labels.push(i);
        for (mean, s) in model.means[i].iter().zip(&sd[i]) {
            let z: f64 = rng.sample(StandardNormal);
            data.push(mean + s * z);
        }
    }
    let mut out = SampleSet::new(d, data)?.with_labels(labels)?;
    out.seed = Some(seed);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> GmmModel {
        GmmModel::new(weights, means, variances).unwrap()
    }

    #[test]
    fn random_model_is_valid() {
        for seed in 0..20 {
            let m = GmmModel::random(7, 4, seed);
            m.validate().unwrap();
            assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(GmmModel::random(5, 3, 9), GmmModel::random(5, 3, 9));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = GmmModel::random(3, 2, 1);
        let mut buf = Vec::new();
        m.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"r\": 2"));
        assert_eq!(GmmModel::read_json(buf.as_slice()).unwrap(), m);
        let bad = r#"{"r":1,"weights":[0.5],"means":[[0.0]],"variances":[[1.0]]}"#;
        assert!(GmmModel::read_json(bad.as_bytes()).is_err());
        let bad = r#"{"r":1,"weights":[1.0],"means":[[0.0]],"variances":[[-1.0]]}"#;
        assert!(GmmModel::read_json(bad.as_bytes()).is_err());
    }

    #[test]
    fn zero_weight_component_is_never_drawn() {
        let m = model(vec![1.0, 0.0], vec![vec![0.0], vec![5.0]], vec![vec![1.0], vec![1.0]]);
        let s = sample_gmm(&m, 500, 3).unwrap();
        assert!(s.labels.unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn zero_variance_samples_equal_means() {
        let m = model(
            vec![0.5, 0.5],
            vec![vec![1.0, 2.0], vec![-3.0, 4.0]],
            vec![vec![0.0; 2], vec![0.0; 2]],
        );
        let s = sample_gmm(&m, 100, 4).unwrap();
        for (row, &l) in s.rows().zip(s.labels.as_ref().unwrap()) {
            assert_eq!(row, m.means[l].as_slice());
        }
    }

    #[test]
    fn sample_mean_is_close() {
        let m = model(vec![1.0], vec![vec![1.5, -2.0, 0.0]], vec![vec![1.0; 3]]);
        let s = sample_gmm(&m, 100_000, 5).unwrap();
        for j in 0..3 {
            let mean = s.rows().map(|r| r[j]).sum::<f64>() / s.len() as f64;
            assert!((mean - m.means[0][j]).abs() < 0.03);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = GmmModel::random(4, 3, 2);
        assert_eq!(sample_gmm(&m, 50, 8).unwrap(), sample_gmm(&m, 50, 8).unwrap());
        assert_ne!(sample_gmm(&m, 50, 8).unwrap(), sample_gmm(&m, 50, 9).unwrap());
    }
}
