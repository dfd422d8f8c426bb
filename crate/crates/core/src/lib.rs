//! Partition priors built from Dirichlet processes and their coloured
//! extension, exact and Monte Carlo samplers for them, conjugate
//! normal-gamma regression marginals, a Pólya-urn Gibbs sampler and
//! posterior summaries under pairwise loss.

pub mod conjugate;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod generators;
pub mod gibbs;
pub mod partition;
pub mod prior;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
