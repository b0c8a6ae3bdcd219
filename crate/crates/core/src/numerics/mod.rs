//! Dense numerical kernels shared by the decomposition and mixture pipelines.

mod assignment;
mod eig;
mod lm;
mod lstsq;
mod nnls;
mod rng;
mod simplex;

pub use assignment::{max_weight_assignment, min_cost_assignment};
pub use eig::{eig, EigenPairs};
pub use lm::{nlls_refine, LeastSquaresProblem, RefineOptions, RefineReport};
pub use lstsq::{lstsq, lstsq_scaled, lstsq_scaled_vec, lstsq_vec, LstsqReport, ILL_CONDITIONED};
pub use nnls::{nnls, NnlsReport};
pub use rng::{derive_seed, gaussian_vector, stream_rng};
pub use simplex::{simplex_nlls, SimplexFit};
