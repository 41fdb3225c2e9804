//! Numerics core for LLM-assisted Bayesian optimization campaigns.
//!
//! The crate holds everything that does not talk to a language model:
//! mixed search spaces and their encoding, the GP surrogate, the LogEI
//! acquisition family, comparison optimizers, benchmark objectives and the
//! campaign metrics.

pub mod acquisition;
pub mod baselines;
pub mod benchmarks;
pub mod bo;
pub mod campaign;
pub mod compass;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod seeds;
pub mod space;
pub mod special;

pub use error::{Error, Result};
