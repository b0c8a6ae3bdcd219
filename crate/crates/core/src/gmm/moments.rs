use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{GmmModel, SampleSet};
use crate::combinatorics::TensorKey;
use crate::error::{Error, Result};
use crate::tensor_store::IncompleteSymmetricTensor;

/// Moment values of one order, keyed by sorted index tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub order: usize,
    pub d: usize,
    pub values: BTreeMap<TensorKey, f64>,
}

impl MomentSet {
    pub fn get(&self, key: &TensorKey) -> Result<f64> {
        self.values
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingEntry(key.slots().to_vec()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The same values as a complex incomplete tensor.
    pub fn to_tensor(&self) -> IncompleteSymmetricTensor {
        let mut t = IncompleteSymmetricTensor::new(self.d, self.order);
        for (k, &v) in &self.values {
            t.insert(k.slots().to_vec(), Complex64::new(v, 0.0))
                .expect("keys validated on construction");
        }
        t
    }

    /// Union of two sets of the same order and dimension.
    pub fn merged(&self, other: &MomentSet) -> MomentSet {
        assert_eq!((self.order, self.d), (other.order, other.d));
        let mut values = self.values.clone();
        values.extend(other.values.iter().map(|(k, v)| (k.clone(), *v)));
        MomentSet {
            order: self.order,
            d: self.d,
            values,
        }
    }
}

fn check_keys(keys: &[TensorKey], d: usize) -> Result<usize> {
    let order = keys.first().map_or(0, TensorKey::order);
    for k in keys {
        if k.order() != order || k.slots().last().is_some_and(|&s| s >= d) {
            return Err(Error::InvalidTensor(format!(
                "key {:?} does not fit order {order}, dimension {d}",
                k.slots()
            )));
        }
    }
    Ok(order)
}

const CHUNK_ROWS: usize = 2048;

/// Empirical moments `(1/N) sum_n prod_{s in key} y_n[s]`.
///
/// Chunks are accumulated in parallel and summed by a fixed pairwise tree,
/// so the result does not depend on the number of worker threads.
pub fn sample_moments(samples: &SampleSet, keys: &[TensorKey]) -> Result<MomentSet> {
    let d = samples.dim();
    let order = check_keys(keys, d)?;
    let chunks: Vec<&[f64]> = samples.as_slice().chunks(CHUNK_ROWS * d).collect();
    let mut partial: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut acc = vec![0.0; keys.len()];
            for row in chunk.chunks_exact(d) {
                for (a, k) in acc.iter_mut().zip(keys) {
                    *a += k.slots().iter().map(|&s| row[s]).product::<f64>();
                }
            }
            acc
        })
        .collect();
    while partial.len() > 1 {
        partial = partial
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => a.iter().zip(b).map(|(x, y)| x + y).collect(),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    let n = samples.len() as f64;
    let sums = partial.pop().unwrap_or_else(|| vec![0.0; keys.len()]);
    let values = keys.iter().cloned().zip(sums.into_iter().map(|s| s / n)).collect();
    Ok(MomentSet { order, d, values })
}

/// `E[z^t]` for `z ~ N(mu, var)` by `E[z^t] = mu E[z^{t-1}] + (t-1) var E[z^{t-2}]`.
pub fn univariate_gaussian_moment(mu: f64, var: f64, t: usize) -> f64 {
    let (mut prev, mut cur) = (1.0, mu);
    if t == 0 {
        return prev;
    }
    for s in 2..=t {
        let next = mu * cur + (s - 1) as f64 * var * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Population moments of a diagonal mixture; coordinates are independent
/// within a component, so each key factors into univariate moments.
pub fn exact_moments(model: &GmmModel, keys: &[TensorKey]) -> Result<MomentSet> {
    model.validate()?;
    let d = model.dim();
    let order = check_keys(keys, d)?;
    let values = keys
        .iter()
        .map(|k| {
            let mult = k.multiplicities();
            let v: f64 = (0..model.r())
                .map(|i| {
                    model.weights[i]
                        * mult
                            .iter()
                            .map(|&(j, t)| univariate_gaussian_moment(model.means[i][j], model.variances[i][j], t))
                            .product::<f64>()
                })
                .sum();
            (k.clone(), v)
        })
        .collect();
    Ok(MomentSet { order, d, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::sample_gmm;
    use crate::tensor_store::{covariance_keys, omega_keys};

    #[test]
    fn sample_moment_arithmetic() {
        let s = SampleSet::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let k = TensorKey::from_unsorted(vec![0, 1]);
        let m = sample_moments(&s, std::slice::from_ref(&k)).unwrap();
        assert_eq!(m.get(&k).unwrap(), 7.0);
        let z = SampleSet::from_rows(&vec![vec![0.0; 3]; 4]).unwrap();
        let m = sample_moments(&z, &omega_keys(3, 2).unwrap()).unwrap();
        assert!(m.values.values().all(|&v| v == 0.0));
    }

    #[test]
    fn univariate_closed_forms() {
        for &(mu, var) in &[(0.0, 1.0), (1.3, 0.7), (-2.0, 2.5), (0.4, 0.0)] {
            let (m2, v2) = (mu * mu, var * var);
            let closed = [
                1.0,
                mu,
                m2 + var,
                mu * m2 + 3.0 * mu * var,
                m2 * m2 + 6.0 * m2 * var + 3.0 * v2,
                mu * m2 * m2 + 10.0 * mu * m2 * var + 15.0 * mu * v2,
                m2 * m2 * m2 + 15.0 * m2 * m2 * var + 45.0 * m2 * v2 + 15.0 * v2 * var,
            ];
            for (t, want) in closed.iter().enumerate() {
                let got = univariate_gaussian_moment(mu, var, t);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "mu={mu} var={var} t={t}");
            }
        }
        assert_eq!(univariate_gaussian_moment(0.0, 1.0, 4), 3.0);
    }

    #[test]
    fn exact_moment_examples() {
        let m = GmmModel::new(vec![1.0], vec![vec![1.0; 3]], vec![vec![4.0, 1.0, 1.0]]).unwrap();
        let k = TensorKey::from_unsorted(vec![0, 0, 1]);
        let v = exact_moments(&m, std::slice::from_ref(&k)).unwrap().get(&k).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(v - 1.0, 4.0);
        let g = GmmModel::random(4, 3, 3);
        let keys = omega_keys(4, 3).unwrap();
        let ex = exact_moments(&g, &keys).unwrap();
        for k in &keys {
            let pure: f64 = (0..3)
                .map(|i| g.weights[i] * k.slots().iter().map(|&s| g.means[i][s]).product::<f64>())
                .sum();
            assert!((ex.get(k).unwrap() - pure).abs() < 1e-14);
        }
    }

    #[test]
    fn sample_moments_converge_to_exact() {
        let model = GmmModel::random(4, 2, 11);
        let keys: Vec<TensorKey> = omega_keys(4, 3)
            .unwrap()
            .into_iter()
            .chain(covariance_keys(4, 3).concat())
            .collect();
        let n = 1_000_000;
        let s = sample_gmm(&model, n, 12).unwrap();
        let emp = sample_moments(&s, &keys).unwrap();
        let ex = exact_moments(&model, &keys).unwrap();
        for k in &keys {
            let mean = emp.get(k).unwrap();
            let second: f64 = s
                .rows()
                .map(|r| k.slots().iter().map(|&j| r[j]).product::<f64>().powi(2))
                .sum::<f64>()
                / n as f64;
            let std = (second - mean * mean).max(0.0).sqrt();
            assert!(
                (mean - ex.get(k).unwrap()).abs() <= 5.0 * std / (n as f64).sqrt(),
                "key {k:?}"
            );
        }
    }

    #[test]
    fn reduction_is_chunking_independent() {
        let model = GmmModel::random(3, 2, 1);
        let s = sample_gmm(&model, 3 * CHUNK_ROWS + 17, 2).unwrap();
        let keys = omega_keys(3, 2).unwrap();
        let a = sample_moments(&s, &keys).unwrap();
        let b = sample_moments(&s, &keys).unwrap();
        assert_eq!(a, b);
        for k in &keys {
            let direct: f64 = s.rows().map(|r| r[k.slots()[0]] * r[k.slots()[1]]).sum::<f64>() / s.len() as f64;
            assert!((a.get(k).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mixed_orders() {
        let s = SampleSet::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let keys = vec![TensorKey::from_unsorted(vec![0]), TensorKey::from_unsorted(vec![0, 1])];
        assert!(sample_moments(&s, &keys).is_err());
    }
}
