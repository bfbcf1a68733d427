//! Numerical laboratory for deformed Ginibre ensembles.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod duality;
pub mod edgestat;
pub mod error;
pub mod integrals;
pub mod kernels;
pub mod mc;
pub mod model;
pub mod numkit;
pub mod persist;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod specialfn;

pub use error::{Error, Result};
pub use numkit::{ComplexMatrix, C64};
