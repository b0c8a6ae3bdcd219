// `!(x >= 0.0)` style checks are used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combinatorics;
pub mod decomposition;
pub mod error;
pub mod experiments;
pub mod generating;
pub mod gmm;
pub mod numerics;
pub mod tensor_store;

pub use error::{Error, Result};
