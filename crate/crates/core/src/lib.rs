//! Gaussian single-index models: generative exponents, partial-trace
//! recovery, link construction and sample-complexity calculators.

pub mod agnostic;
pub mod bounds;
pub mod error;
pub mod exponent;
pub mod forge;
pub mod hermite;
pub mod lanczos;
pub mod link;
pub mod model;
pub mod quad;
pub mod recovery;
pub mod rng;
pub mod tensor;

/// Library version recorded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use link::{eval_link, LinkFunction};
