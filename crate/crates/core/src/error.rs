use thiserror::Error;

/// Errors raised by the decomposition and mixture-learning pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("binomial coefficient C({n}, {k}) overflows u64")]
    Overflow { n: u64, k: u64 },
    #[error("rank {r} exceeds the largest computable rank {max}")]
    RankTooLarge { r: usize, max: usize },
    #[error("tensor order {m} exceeds dimension {d}")]
    OrderExceedsDim { m: usize, d: usize },
    #[error("tensor entry {0:?} is missing")]
    MissingEntry(Vec<usize>),
    #[error("row labels {row:?} and column labels {col:?} overlap")]
    KeyCollision { row: Vec<usize>, col: Vec<usize> },
    #[error("shape condition violated: {0}")]
    ShapeCondition(String),
    #[error("generating system for {alpha:?} is rank deficient (rank {rank} < {r})")]
    GeneratingDegenerate { alpha: Vec<usize>, rank: usize, r: usize },
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
    #[error("companion spectrum is degenerate (relative gap {gap:.3e} after {attempts} draws)")]
    DegenerateSpectrum { gap: f64, attempts: usize },
    #[error("tail design matrix is rank deficient (rank {rank} < {r})")]
    TailsDegenerate { rank: usize, r: usize },
    #[error("head design matrix for coordinate {0} is rank deficient")]
    HeadsDegenerate(usize),
    #[error("scale design matrix is rank deficient (rank {rank} < {r})")]
    ScalesDegenerate { rank: usize, r: usize },
    #[error("weight of component {0} collapsed to zero")]
    DegenerateWeight(usize),
    #[error("auxiliary order t={t} must be smaller than m={m}")]
    OrderConflict { t: usize, m: usize },
    #[error("covariance design for coordinate {0} is rank deficient")]
    CovDesignDegenerate(usize),
    #[error("active-set iteration limit reached")]
    MaxIterations,
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    // the inner error is part of the message, so it is not exposed as `source()`
    #[error("{stage}: {inner}")]
    Stage { stage: &'static str, inner: Box<Error> },
}

impl Error {
    /// Wraps an error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            inner: Box::new(self),
        }
    }

    /// The innermost error, with stage context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { inner, .. } => inner.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
