//! Algorithms for studying disparate censorship in risk-stratification models.
//!
//! The crate is `no_std` and only needs an allocator. It covers the synthetic
//! cohort generator, the one-hot RBF support vector machine used as the risk
//! model, ranking-gap metrics (AUC, xAUC and their group gaps), executable
//! checks for boundary-consistent label noise, and the statistical tests used
//! to detect testing-rate disparities. File formats, the experiment harness and
//! the command line live in the `censorlab` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod detect;
pub mod error;
pub mod metrics;
pub mod rng;
pub mod stats;
pub mod synthgen;
pub mod theory;
pub mod types;

pub use error::{Error, Result};
pub use rng::{derive_realization_seed, SimRng};
pub use types::{Cohort, GroupId, Patient, SimulationConfig};
