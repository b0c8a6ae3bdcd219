use serde::{Deserialize, Serialize};

use crate::combinatorics::choose;
use crate::error::{Error, Result};

/// Largest rank the generating-polynomial method can handle for `(n, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxRank {
    pub r_max: usize,
    pub p_star: usize,
    pub k_star: usize,
    /// `n >= max(2m - 1, ceil(m^2 / 4) - 1)`, where the closed form is proven optimal.
    pub guaranteed: bool,
}

/// Smallest `n` for which [`max_rank`] is guaranteed to equal [`brute_force_max_rank`].
pub fn rank_threshold(m: usize) -> usize {
    (2 * m - 1).max((m * m).div_ceil(4) - 1)
}

/// Rank bound from the balanced choice `p* = (m-1)/2` and the largest `k`
/// with `C(k, p*) <= C(n-k-1, m-p*-1)`.
pub fn max_rank(n: usize, m: usize) -> Result<MaxRank> {
    if m < 3 || n < m {
        return Err(Error::ShapeCondition(format!("need m >= 3 and n >= m, got n={n}, m={m}")));
    }
    let p = (m - 1) / 2;
    let k_star = (p..=n - m + p)
        .filter(|&k| choose(k, p) <= choose(n - k - 1, m - p - 1))
        .max()
        .unwrap_or(p);
    let alt = if n >= k_star + 2 {
        choose(n - 2 - k_star, m - 1 - p)
    } else {
        0
    };
    let guaranteed = n >= rank_threshold(m);
    if !guaranteed {
        log::warn!(
            "n={n} is below the threshold {} for m={m}; rank bound may not be tight",
            rank_threshold(m)
        );
    }
    Ok(MaxRank {
        r_max: choose(k_star, p).max(alt),
        p_star: p,
        k_star,
        guaranteed,
    })
}

/// `max over p in [1, m-2], k in [p, n-m+p] of min(C(k,p), C(n-k-1, m-p-1))`.
pub fn brute_force_max_rank(n: usize, m: usize) -> usize {
    if m < 3 || n < m {
        return 0;
    }
    (1..=m - 2)
        .flat_map(|p| (p..=n - m + p).map(move |k| choose(k, p).min(choose(n - k - 1, m - p - 1))))
        .max()
        .unwrap_or(0)
}

pub const DEFAULT_STARTS: usize = 16;

/// Shape parameters for one decomposition run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionParams {
    pub r: usize,
    pub p: usize,
    pub k: usize,
    pub seed: u64,
    pub refine: bool,
    pub refine_opts: crate::numerics::RefineOptions,
    /// Upper bound on random combinations tried by the refining pipeline.
    pub starts: usize,
}

impl DecompositionParams {
    pub fn new(r: usize, p: usize, k: usize) -> Self {
        DecompositionParams {
            r,
            p,
            k,
            seed: 0,
            refine: true,
            refine_opts: Default::default(),
            starts: DEFAULT_STARTS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn feasible(n: usize, m: usize, r: usize, p: usize, k: usize) -> bool {
    // k > p keeps every J1^{-j} nonempty, which the head solve needs
    k > p && k + m <= n + p && choose(k, p) >= r && choose(n - k - 1, m - p - 1) >= r
}

/// Picks `p = p*` and the smallest feasible `k`, falling back to other `p`.
pub fn choose_params(n: usize, m: usize, r: usize) -> Result<DecompositionParams> {
    if r == 0 {
        return Err(Error::ShapeCondition("rank must be positive".into()));
    }
    let too_large = || Error::RankTooLarge {
        r,
        max: max_rank(n, m).map_or(0, |b| b.r_max),
    };
    if m < 3 || n < m {
        return Err(too_large());
    }
    let p_star = (m - 1) / 2;
    let order = std::iter::once(p_star).chain((1..=m - 2).filter(|&p| p != p_star));
    for p in order {
        if let Some(k) = (p + 1..=n - m + p).find(|&k| feasible(n, m, r, p, k)) {
            return Ok(DecompositionParams::new(r, p, k));
        }
    }
    Err(too_large())
}
