//! Causal performance model: graph discovery, SCM fitting, and interventional
//! estimates that feed the surrogate's prior.
//!
//! The pipeline is PC skeleton search with Fisher-z independence tests under
//! tier background knowledge, ordinary-least-squares mechanisms on the
//! resulting DAG, and Monte Carlo forward sampling under do-interventions on
//! the configuration and fidelity nodes.

mod data;
mod fisher;
mod graph;
mod pc;
mod scm;

pub use data::ObservationalData;
pub use fisher::{fisher_z_test, FisherZ};
pub use graph::{CausalGraph, Node, Tier};
pub use pc::{pc_discover, PcConfig};
pub use scm::{do_estimate, fit_scm, CausalModel, DoEstimate, LinearGaussianScm, ScmNode};

use crate::Result;

/// Prior knowledge the surrogate pulls from a causal model: interventional
/// mean and spread per objective at `(x, s)`.
pub trait CausalPrior: Send + Sync {
    fn mean_and_scale(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)>;

    fn num_objectives(&self) -> usize;
}

/// Prior that knows nothing: zero mean, zero scale. Dropping the causal terms
/// this way reduces the surrogate to a plain multi-fidelity GP.
#[derive(Debug, Clone)]
pub struct AgnosticPrior {
    m: usize,
}

impl AgnosticPrior {
    pub fn new(m: usize) -> Self {
        AgnosticPrior { m }
    }
}

impl CausalPrior for AgnosticPrior {
    fn mean_and_scale(&self, _x: &[f64], _s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((vec![0.0; self.m], vec![0.0; self.m]))
    }

    fn num_objectives(&self) -> usize {
        self.m
    }
}
