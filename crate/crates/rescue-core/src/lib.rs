//! Cost-aware multi-fidelity multi-objective Bayesian optimization with causal priors.

pub mod acquisition;
pub mod benchmarks;
pub mod causal;
pub mod cost;
pub mod data;
pub mod error;
pub mod moea;
pub mod pareto;
pub mod problem;
pub mod runner;
pub mod sampling;
pub mod space;
pub mod surrogate;
pub mod theory;

pub use error::{Error, Result};
