//! Real-valued probabilistic reformulations of quantum dynamics.
//!
//! Each construction (real matrix pairs, Gaussian kernels, max-caliber chains,
//! √Z-normalized belief propagation, cyclic factor graphs, dual-observer
//! stepping) is implemented next to a brute-force or matrix-exponential
//! reference in [`oracle`] so the two can be compared numerically.

pub mod caliber;
pub mod cavityq;
pub mod cli;
pub mod cyclegraph;
pub mod densitydual;
pub mod energetics;
pub mod error;
pub mod experiments;
pub mod factor;
pub mod firstperson;
pub mod kernelprop;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use factor::{FactorChain, FactorCycle, Role};
