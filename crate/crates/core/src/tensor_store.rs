//! Sparse storage for incomplete symmetric tensors.
//!
//! Only the entries a pipeline actually needs are stored: the distinct-index
//! keys `Omega_m` and, for covariance recovery, keys with one repeated pair.
//! Values are kept once per sorted key, so symmetry holds by construction.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{subsets_lex, IndexSubset, TensorKey};
use crate::error::{Error, Result};
use crate::numerics::gaussian_vector;

/// Components `q_1..q_r` with optional scalar weights `lambda_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentList {
    pub vectors: Vec<Vec<Complex64>>,
    pub weights: Option<Vec<Complex64>>,
}

impl ComponentList {
    pub fn new(vectors: Vec<Vec<Complex64>>) -> Self {
        assert!(!vectors.is_empty(), "component list must be nonempty");
        let d = vectors[0].len();
        assert!(vectors.iter().all(|v| v.len() == d), "components must share a length");
        ComponentList { vectors, weights: None }
    }

    pub fn with_weights(vectors: Vec<Vec<Complex64>>, weights: Vec<Complex64>) -> Self {
        assert_eq!(vectors.len(), weights.len());
        let mut c = ComponentList::new(vectors);
        c.weights = Some(weights);
        c
    }

    /// Real components with unit weights.
    pub fn from_real(vectors: &[Vec<f64>]) -> Self {
        ComponentList::new(
            vectors
                .iter()
                .map(|v| v.iter().map(|&x| Complex64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn weight(&self, i: usize) -> Complex64 {
        self.weights.as_ref().map_or(Complex64::new(1.0, 0.0), |w| w[i])
    }

    /// `sum_i lambda_i q_i[s_1] ... q_i[s_m]` for one key.
    pub fn entry(&self, slots: &[usize]) -> Complex64 {
        self.vectors
            .iter()
            .enumerate()
            .map(|(i, q)| slots.iter().fold(self.weight(i), |acc, &s| acc * q[s]))
            .sum()
    }
}

/// A symmetric tensor of order `m` over `C^d`, known only on a key subset.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteSymmetricTensor {
    d: usize,
    m: usize,
    entries: BTreeMap<TensorKey, Complex64>,
}

impl IncompleteSymmetricTensor {
    pub fn new(d: usize, m: usize) -> Self {
        IncompleteSymmetricTensor {
            d,
            m,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &TensorKey> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TensorKey, &Complex64)> {
        self.entries.iter()
    }

    fn check_key(&self, key: &TensorKey) -> Result<()> {
        if key.order() != self.m || key.slots().iter().any(|&s| s >= self.d) {
            return Err(Error::InvalidTensor(format!(
                "key {key:?} invalid for d={}, m={}",
                self.d, self.m
            )));
        }
        Ok(())
    }

    /// Stores a value; the key may be given in any slot order.
    pub fn insert(&mut self, slots: Vec<usize>, value: Complex64) -> Result<()> {
        let key = TensorKey::from_unsorted(slots);
        self.check_key(&key)?;
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn remove(&mut self, slots: &[usize]) -> Option<Complex64> {
        let mut s = slots.to_vec();
        s.sort_unstable();
        self.entries.remove(s.as_slice())
    }

    /// Looks up an entry by any permutation of its key.
    pub fn get(&self, slots: &[usize]) -> Option<Complex64> {
        if slots.windows(2).all(|w| w[0] <= w[1]) {
            self.entries.get(slots).copied()
        } else {
            let mut s = slots.to_vec();
            s.sort_unstable();
            self.entries.get(s.as_slice()).copied()
        }
    }

    pub fn require(&self, slots: &[usize]) -> Result<Complex64> {
        self.get(slots).ok_or_else(|| {
            let mut s = slots.to_vec();
            s.sort_unstable();
            Error::MissingEntry(s)
        })
    }

    /// Entrywise `self - other` on the keys of `self`.
    pub fn difference(&self, other: &IncompleteSymmetricTensor) -> Result<IncompleteSymmetricTensor> {
        let mut out = IncompleteSymmetricTensor::new(self.d, self.m);
        for (k, v) in &self.entries {
            out.entries.insert(k.clone(), v - other.require(k.slots())?);
        }
        Ok(out)
    }

    pub fn scaled(&self, c: Complex64) -> IncompleteSymmetricTensor {
        IncompleteSymmetricTensor {
            d: self.d,
            m: self.m,
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    /// The distinct-index keys currently stored.
    pub fn distinct_keys(&self) -> Vec<TensorKey> {
        self.entries.keys().filter(|k| k.is_distinct()).cloned().collect()
    }

    pub fn to_json(&self) -> TensorFile {
        TensorFile {
            d: self.d,
            m: self.m,
            entries: self
                .entries
                .iter()
                .map(|(k, v)| EntryRecord {
                    key: k.slots().to_vec(),
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
    }

    pub fn from_json(file: TensorFile) -> Result<Self> {
        let mut t = IncompleteSymmetricTensor::new(file.d, file.m);
        for e in file.entries {
            let key = TensorKey::from_sorted(e.key.clone())
                .ok_or_else(|| Error::InvalidTensor(format!("key {:?} is not sorted", e.key)))?;
            t.check_key(&key)?;
            if t.entries.insert(key, Complex64::new(e.re, e.im)).is_some() {
                return Err(Error::InvalidTensor(format!("duplicate key {:?}", e.key)));
            }
        }
        Ok(t)
    }

    pub fn write_json<W: Write>(&self, w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(w, &self.to_json())?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let file: TensorFile = serde_json::from_reader(r).map_err(|e| Error::InvalidTensor(e.to_string()))?;
        Self::from_json(file)
    }
}

/// On-disk tensor layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorFile {
    pub d: usize,
    pub m: usize,
    pub entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryRecord {
    pub key: Vec<usize>,
    pub re: f64,
    pub im: f64,
}

/// All `C(d, m)` distinct-index keys in lexicographic order.
pub fn omega_keys(d: usize, m: usize) -> Result<Vec<TensorKey>> {
    if m > d {
        return Err(Error::OrderExceedsDim { m, d });
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    Ok(subsets_lex(0, d - 1, m).iter().map(TensorKey::from).collect())
}

/// Keys `(j, j, i_1, ..., i_{m-2})` with distinct `i`'s different from `j`,
/// grouped by `j = 0..d`.
pub fn covariance_keys(d: usize, m: usize) -> Vec<Vec<TensorKey>> {
    assert!(m >= 2);
    (0..d)
        .map(|j| {
            let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
            if others.len() < m - 2 {
                return Vec::new();
            }
            let picks = if others.is_empty() {
                vec![IndexSubset::empty()]
            } else {
                subsets_lex(0, others.len() - 1, m - 2)
            };
            picks
                .iter()
                .map(|s| {
                    let mut slots: Vec<usize> = s.as_slice().iter().map(|&i| others[i]).collect();
                    slots.push(j);
                    slots.push(j);
                    TensorKey::from_unsorted(slots)
                })
                .collect()
        })
        .collect()
}

/// Evaluates `sum_i lambda_i q_i^{(x) m}` on the requested keys.
pub fn from_components(comps: &ComponentList, m: usize, keys: &[TensorKey]) -> IncompleteSymmetricTensor {
    let mut t = IncompleteSymmetricTensor::new(comps.dim(), m);
    for k in keys {
        assert_eq!(k.order(), m, "key order mismatch");
        t.entries.insert(k.clone(), comps.entry(k.slots()));
    }
    t
}

/// Matrix `M[row, col] = T[row + col (+ 0)]` over index-subset labels.
pub fn block_matrix(
    t: &IncompleteSymmetricTensor,
    rows: &[IndexSubset],
    cols: &[IndexSubset],
    pad_with_zero_label: bool,
) -> Result<DMatrix<Complex64>> {
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    let mut slots = Vec::with_capacity(t.order());
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            if r.as_slice().iter().any(|&x| c.contains(x)) {
                return Err(Error::KeyCollision {
                    row: r.as_slice().to_vec(),
                    col: c.as_slice().to_vec(),
                });
            }
            slots.clear();
            if pad_with_zero_label {
                slots.push(0);
            }
            slots.extend_from_slice(r.as_slice());
            slots.extend_from_slice(c.as_slice());
            slots.sort_unstable();
            out[(i, j)] = t.require(&slots)?;
        }
    }
    Ok(out)
}

/// Number of ordered tuples that sort to `key`: `m! / prod(mult!)`.
fn ordered_multiplicity(key: &TensorKey) -> f64 {
    let fact = |n: usize| (1..=n).map(|x| x as f64).product::<f64>();
    let denom: f64 = key.multiplicities().iter().map(|&(_, c)| fact(c)).product();
    fact(key.order()) / denom
}

/// Hilbert–Schmidt norm restricted to `keys`, counting every ordered tuple.
pub fn omega_norm(t: &IncompleteSymmetricTensor, keys: &[TensorKey]) -> Result<f64> {
    let mut acc = 0.0;
    for k in keys {
        acc += ordered_multiplicity(k) * t.require(k.slots())?.norm_sqr();
    }
    Ok(acc.sqrt())
}

/// `omega_norm(a - b)` over `keys`.
pub fn omega_distance(a: &IncompleteSymmetricTensor, b: &IncompleteSymmetricTensor, keys: &[TensorKey]) -> Result<f64> {
    let mut acc = 0.0;
    for k in keys {
        let diff = a.require(k.slots())? - b.require(k.slots())?;
        acc += ordered_multiplicity(k) * diff.norm_sqr();
    }
    Ok(acc.sqrt())
}

/// Adds real Gaussian noise on the stored keys, scaled to `omega_norm = epsilon`.
pub fn perturb(t: &IncompleteSymmetricTensor, epsilon: f64, seed: u64) -> IncompleteSymmetricTensor {
    assert!(epsilon >= 0.0);
    if epsilon == 0.0 || t.is_empty() {
        return t.clone();
    }
    let noise = gaussian_vector(seed, t.len());
    let raw: f64 = t
        .keys()
        .zip(&noise)
        .map(|(k, e)| ordered_multiplicity(k) * e * e)
        .sum::<f64>()
        .sqrt();
    let scale = epsilon / raw;
    let mut out = t.clone();
    for ((_, v), e) in out.entries.iter_mut().zip(&noise) {
        *v += Complex64::new(e * scale, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn key(s: &[usize]) -> TensorKey {
        TensorKey::from_unsorted(s.to_vec())
    }

    fn subset(s: &[usize]) -> IndexSubset {
        IndexSubset::new(s.to_vec())
    }

    #[test]
    fn omega_keys_examples() {
        assert_eq!(omega_keys(3, 3).unwrap(), vec![key(&[0, 1, 2])]);
        assert_eq!(
            omega_keys(4, 3).unwrap(),
            vec![key(&[0, 1, 2]), key(&[0, 1, 3]), key(&[0, 2, 3]), key(&[1, 2, 3])]
        );
        assert_eq!(omega_keys(3, 4), Err(Error::OrderExceedsDim { m: 4, d: 3 }));
    }

    #[test]
    fn from_components_examples() {
        let t = from_components(&ComponentList::from_real(&[vec![1., 2., 3.]]), 3, &[key(&[0, 1, 2])]);
        assert_eq!(t.get(&[2, 0, 1]), Some(c(6.0)));

        let comps = ComponentList::from_real(&[vec![1., 1., 1.], vec![1., -1., 1.]]);
        let t = from_components(&comps, 3, &[key(&[0, 1, 2])]);
        assert_eq!(t.get(&[0, 1, 2]), Some(c(0.0)));

        // 2*4*6 + (-1)(-2)(-3), expanded by hand
        let comps = ComponentList::from_real(&[vec![1., 2., 3., 4., 5., 6.], vec![1., -1., 2., -2., 3., -3.]]);
        let t = from_components(&comps, 3, &[key(&[1, 3, 5])]);
        assert_eq!(t.get(&[1, 3, 5]), Some(c(42.0)));
    }

    #[test]
    fn block_matrix_examples() {
        let comps = ComponentList::from_real(&[vec![1., 2., 3., 4.]]);
        let t = from_components(&comps, 3, &omega_keys(4, 3).unwrap());
        let b = block_matrix(&t, &[subset(&[1])], &[subset(&[2]), subset(&[3])], true).unwrap();
        assert_eq!(b, DMatrix::from_row_slice(1, 2, &[c(6.), c(8.)]));
        let b = block_matrix(&t, &[subset(&[1]), subset(&[2])], &[subset(&[3])], true).unwrap();
        assert_eq!(b, DMatrix::from_row_slice(2, 1, &[c(8.), c(12.)]));

        let mut missing = t.clone();
        missing.remove(&[0, 1, 2]);
        assert_eq!(
            block_matrix(&missing, &[subset(&[1])], &[subset(&[2])], true),
            Err(Error::MissingEntry(vec![0, 1, 2]))
        );
        assert!(matches!(
            block_matrix(&t, &[subset(&[1])], &[subset(&[1, 2])], false),
            Err(Error::KeyCollision { .. })
        ));
    }

    #[test]
    fn norm_examples() {
        let mut t = IncompleteSymmetricTensor::new(4, 3);
        t.insert(vec![0, 1, 2], c(2.0)).unwrap();
        assert_relative_eq!(omega_norm(&t, &[key(&[0, 1, 2])]).unwrap(), 24f64.sqrt());
        t.insert(vec![0, 1, 2], c(1.0)).unwrap();
        t.insert(vec![1, 2, 3], c(2.0)).unwrap();
        let keys = t.distinct_keys();
        assert_relative_eq!(omega_norm(&t, &keys).unwrap(), 30f64.sqrt());
        let z = t.scaled(c(0.0));
        assert_eq!(omega_norm(&z, &keys).unwrap(), 0.0);
        assert_relative_eq!(omega_norm(&t.scaled(c(-3.0)), &keys).unwrap(), 3.0 * 30f64.sqrt());
        let rev: Vec<_> = keys.iter().rev().cloned().collect();
        assert_relative_eq!(omega_norm(&t, &rev).unwrap(), 30f64.sqrt());
    }

    #[test]
    fn perturb_contract() {
        let comps = ComponentList::from_real(&[vec![1., 2., -1., 0.5, 3.]]);
        let keys = omega_keys(5, 3).unwrap();
        let t = from_components(&comps, 3, &keys);
        assert_eq!(perturb(&t, 0.0, 9), t);
        let p = perturb(&t, 0.1, 9);
        assert!((omega_distance(&p, &t, &keys).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(p, perturb(&t, 0.1, 9));
        assert_ne!(p, perturb(&t, 0.1, 10));
        assert!(p.iter().all(|(k, v)| (v - t.get(k.slots()).unwrap()).im == 0.0));
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let comps = ComponentList::from_real(&[vec![1., 2., 3., 4.]]);
        let t = from_components(&comps, 3, &omega_keys(4, 3).unwrap());
        let mut buf = Vec::new();
        t.write_json(&mut buf).unwrap();
        assert_eq!(IncompleteSymmetricTensor::read_json(buf.as_slice()).unwrap(), t);

        let unsorted = r#"{"d":3,"m":3,"entries":[{"key":[1,0,2],"re":1.0,"im":0.0}]}"#;
        assert!(IncompleteSymmetricTensor::read_json(unsorted.as_bytes()).is_err());
        let dup = r#"{"d":3,"m":3,"entries":[{"key":[0,1,2],"re":1.0,"im":0.0},{"key":[0,1,2],"re":2.0,"im":0.0}]}"#;
        assert!(IncompleteSymmetricTensor::read_json(dup.as_bytes()).is_err());
        let out_of_range = r#"{"d":3,"m":3,"entries":[{"key":[0,1,3],"re":1.0,"im":0.0}]}"#;
        assert!(IncompleteSymmetricTensor::read_json(out_of_range.as_bytes()).is_err());
    }

    #[test]
    fn covariance_key_layout() {
        let groups = covariance_keys(4, 3);
        assert_eq!(groups.len(), 4);
        assert_eq!(groups[1], vec![key(&[0, 1, 1]), key(&[1, 1, 2]), key(&[1, 1, 3])]);
        assert!(groups.iter().flatten().all(|k| k.is_covariance()));
        let g4 = covariance_keys(6, 4);
        assert!(g4.iter().all(|g| g.len() == 10));
    }

    #[test]
    fn factorization_identity() {
        // block(from_components) == sum_i lambda_i q_i[0] [q_i]_rows [q_i]_cols^T
        let d = 9;
        let m = 4;
        let comps = ComponentList::with_weights(
            (0..3)
                .map(|i| {
                    gaussian_vector(100 + i, 2 * d)
                        .chunks(2)
                        .map(|p| Complex64::new(p[0], p[1]))
                        .collect()
                })
                .collect(),
            vec![c(0.7), Complex64::new(-1.2, 0.3), c(2.0)],
        );
        let t = from_components(&comps, m, &omega_keys(d, m).unwrap());
        let rows = subsets_lex(1, 4, 1);
        let cols = subsets_lex(5, 8, 2);
        let block = block_matrix(&t, &rows, &cols, true).unwrap();
        let mut expect = DMatrix::<Complex64>::zeros(rows.len(), cols.len());
        for (i, q) in comps.vectors.iter().enumerate() {
            let lam = comps.weight(i) * q[0];
            for (a, r) in rows.iter().enumerate() {
                for (b, cc) in cols.iter().enumerate() {
                    expect[(a, b)] += lam * r.eval(q, 0) * cc.eval(q, 0);
                }
            }
        }
        assert!((&block - &expect).norm() <= 1e-12 * expect.norm());
    }
}
