//! Index and monomial bookkeeping.
//!
//! Squarefree monomials `x_{i_1} ... x_{i_p}` are identified with their
//! strictly increasing index subsets. Label `0` is the homogenizing
//! coordinate `x_0 = 1`. Tensor entries are addressed by sorted
//! [`TensorKey`]s.

use std::borrow::Borrow;
use std::fmt;

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact binomial coefficient `C(n, k)`, `0` when `k > n`.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) is always an integer
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return Err(Error::Overflow { n, k });
        }
    }
    Ok(acc as u64)
}

/// `binomial` for the small arguments the pipelines use; panics on overflow.
pub(crate) fn choose(n: usize, k: usize) -> usize {
    binomial(n as u64, k as u64).expect("binomial overflow") as usize
}

/// A strictly increasing set of variable labels.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IndexSubset(Vec<usize>);

impl IndexSubset {
    /// Builds a subset from strictly increasing labels.
    ///
    /// Panics if `indices` is not strictly increasing.
    pub fn new(indices: Vec<usize>) -> Self {
        assert!(
            indices.windows(2).all(|w| w[0] < w[1]),
            "index subset must be strictly increasing: {indices:?}"
        );
        IndexSubset(indices)
    }

    pub fn empty() -> Self {
        IndexSubset(Vec::new())
    }

    pub fn singleton(i: usize) -> Self {
        IndexSubset(vec![i])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Largest label; `None` for the empty subset.
    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Adds one label not already present.
    pub fn with(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        match v.binary_search(&i) {
            Ok(_) => panic!("label {i} already in {:?}", self.0),
            Err(pos) => v.insert(pos, i),
        }
        IndexSubset(v)
    }

    /// Removes one label if present.
    pub fn without(&self, i: usize) -> Self {
        IndexSubset(self.0.iter().copied().filter(|&x| x != i).collect())
    }

    /// Evaluates the monomial on `values`, where label `l` reads `values[l - offset]`.
    pub fn eval<T>(&self, values: &[T], offset: usize) -> T
    where
        T: Copy + std::ops::Mul<Output = T> + One,
    {
        self.0.iter().fold(T::one(), |acc, &l| acc * values[l - offset])
    }
}

impl fmt::Debug for IndexSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

/// A sorted multi-index addressing one entry of a symmetric tensor.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TensorKey(Vec<usize>);

impl TensorKey {
    /// Sorts `slots` into canonical order.
    pub fn from_unsorted(mut slots: Vec<usize>) -> Self {
        slots.sort_unstable();
        TensorKey(slots)
    }

    /// Wraps already sorted slots; `None` if they are not non-decreasing.
    pub fn from_sorted(slots: Vec<usize>) -> Option<Self> {
        slots.windows(2).all(|w| w[0] <= w[1]).then_some(TensorKey(slots))
    }

    pub fn slots(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// All slots pairwise distinct (an `Omega_m` key).
    pub fn is_distinct(&self) -> bool {
        self.0.windows(2).all(|w| w[0] < w[1])
    }

    /// Exactly one value appears twice and all others once.
    pub fn is_covariance(&self) -> bool {
        let repeats = self.0.windows(2).filter(|w| w[0] == w[1]).count();
        let triples = self.0.windows(3).any(|w| w[0] == w[2]);
        repeats == 1 && !triples
    }

    /// `(label, multiplicity)` pairs in ascending label order.
    pub fn multiplicities(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &s in &self.0 {
            match out.last_mut() {
                Some((l, c)) if *l == s => *c += 1,
                _ => out.push((s, 1)),
            }
        }
        out
    }
}

impl Borrow<[usize]> for TensorKey {
    fn borrow(&self) -> &[usize] {
        &self.0
    }
}

impl From<&IndexSubset> for TensorKey {
    fn from(s: &IndexSubset) -> Self {
        TensorKey(s.0.clone())
    }
}

impl fmt::Debug for TensorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// All `size`-element subsets of `{lo, ..., hi}` in ascending lexicographic order.
pub fn subsets_lex(lo: usize, hi: usize, size: usize) -> Vec<IndexSubset> {
    if size == 0 {
        return vec![IndexSubset::empty()];
    }
    if hi < lo || size > hi - lo + 1 {
        return Vec::new();
    }
    let span = hi - lo + 1;
    let mut out = Vec::with_capacity(choose(span, size));
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(IndexSubset(idx.iter().map(|&i| i + lo).collect()));
        // advance the rightmost index that still has room
        let mut pos = size;
        while pos > 0 {
            pos -= 1;
            if idx[pos] < span - size + pos {
                idx[pos] += 1;
                for q in pos + 1..size {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return out;
            }
        }
    }
}

/// Row basis: the first `r` degree-`p` squarefree monomials in `x_1..x_k`.
pub fn basis_b0(k: usize, p: usize, r: usize) -> Result<Vec<IndexSubset>> {
    let available = choose(k, p);
    if available < r {
        return Err(Error::RankTooLarge { r, max: available });
    }
    let mut all = subsets_lex(1, k, p);
    all.truncate(r);
    Ok(all)
}

/// Column labels: a degree-`p` monomial in `x_1..x_k` times one `x_j`, `j > k`.
pub fn basis_b1(k: usize, p: usize, n: usize) -> Vec<IndexSubset> {
    let heads = subsets_lex(1, k, p);
    let mut out = Vec::with_capacity(heads.len() * n.saturating_sub(k));
    for h in &heads {
        for j in k + 1..=n {
            out.push(h.with(j));
        }
    }
    out
}

/// Equation support for column `alpha`: `(m-p-1)`-subsets of `[k+1, n]`
/// avoiding the tail label of `alpha`.
pub fn support_o_alpha(alpha: &IndexSubset, k: usize, n: usize, m: usize, p: usize) -> Vec<IndexSubset> {
    let tail = alpha.last().expect("alpha must be nonempty");
    debug_assert!(tail > k && tail <= n);
    let size = m - p - 1;
    let labels: Vec<usize> = (k + 1..=n).filter(|&l| l != tail).collect();
    if labels.is_empty() {
        return if size == 0 { vec![IndexSubset::empty()] } else { Vec::new() };
    }
    subsets_lex(0, labels.len() - 1, size)
        .into_iter()
        .map(|s| IndexSubset(s.0.iter().map(|&i| labels[i]).collect()))
        .collect()
}
