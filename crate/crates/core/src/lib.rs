//! Stationary-density estimation for ergodic Itô diffusions from discrete
//! time series.
//!
//! The pipeline: simulate (or ingest) an Euler-Maruyama time series, fit
//! neural drift and diffusion coefficients by least-squares regression,
//! assemble the estimated stationary Fokker-Planck operator, minimize its
//! residual plus normalization/boundary penalties over a density network,
//! and verify the result against closed-form benchmarks and learned-chain
//! statistics.
//!
//! With the default `parallel` feature, batch evaluations run on rayon with
//! deterministic fixed-order reductions; disabling the feature swaps in a
//! sequential path that produces bit-identical results.

pub mod error;
pub mod fields;

pub mod linalg;
pub mod nn;
pub mod parallel;
pub mod quad;
pub mod fp;
pub mod regression;
pub mod rng;
pub mod sde;
pub mod verify;

#[cfg(test)]
pub(crate) mod testutil;


pub use error::{CoreError, Result};
