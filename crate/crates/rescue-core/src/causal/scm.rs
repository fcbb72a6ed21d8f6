//! Linear-Gaussian structural equations on a tiered DAG, with interventional
//! forward sampling.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_chacha::ChaCha8Rng;

use super::data::ObservationalData;
use super::graph::{CausalGraph, Node, Tier};
use super::pc::{pc_discover, PcConfig};
use super::CausalPrior;
use crate::data::Dataset;
use crate::{Error, Result};

/// Mechanism of one node: affine in its parents plus Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmNode {
    pub parents: Vec<usize>,
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub noise_variance: f64,
}

/// Fitted structural causal model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianScm {
    graph: CausalGraph,
    mechanisms: Vec<ScmNode>,
    topo: Vec<usize>,
}

/// Interventional prediction: mean and sample std per objective node.
#[derive(Debug, Clone, PartialEq)]
pub struct DoEstimate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits each node's mechanism by ordinary least squares on its parents.
///
/// Residual variances are population variances; a rank-deficient design gets
/// a 1e-8 ridge. Data columns are matched to graph nodes by name.
pub fn fit_scm(graph: &CausalGraph, data: &ObservationalData) -> Result<LinearGaussianScm> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::domain(format!("SCM fitting needs at least 2 rows, got {n}")));
    }
    let col_of: Vec<usize> = graph
        .nodes()
        .iter()
        .map(|node| {
            data.column_index(&node.name)
                .ok_or_else(|| Error::domain(format!("no data column named {}", node.name)))
        })
        .collect::<Result<_>>()?;

    let mut mechanisms = Vec::with_capacity(graph.len());
    for idx in 0..graph.len() {
        let target = data.column(col_of[idx]);
        let parents = graph.parents(idx);
        if parents.is_empty() {
            let mean = target.iter().sum::<f64>() / n as f64;
            let variance =
                target.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            mechanisms.push(ScmNode {
                parents,
                intercept: mean,
                weights: vec![],
                noise_variance: variance.max(0.0),
            });
            continue;
        }

        let p = parents.len();
        let mut design = DMatrix::zeros(n, p + 1);
        for row in 0..n {
            design[(row, 0)] = 1.0;
        }
        for (j, &parent) in parents.iter().enumerate() {
            let col = data.column(col_of[parent]);
            for row in 0..n {
                design[(row, j + 1)] = col[row];
            }
        }
        let y = DVector::from_vec(target.clone());
        let xtx = design.transpose() * &design;
        let xty = design.transpose() * &y;
        let beta = match Cholesky::new(xtx.clone()) {
            Some(chol) => chol.solve(&xty),
            None => {
                log::warn!(
                    "rank-deficient design for node {}; applying 1e-8 ridge",
                    graph.nodes()[idx].name
                );
                let ridged = xtx + DMatrix::identity(p + 1, p + 1) * 1e-8;
                Cholesky::new(ridged)
                    .ok_or_else(|| {
                        Error::conditioning("normal equations not solvable even with ridge")
                    })?
                    .solve(&xty)
            }
        };
        let residuals = &y - &design * &beta;
        let variance = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
        mechanisms.push(ScmNode {
            parents,
            intercept: beta[0],
            weights: beta.iter().skip(1).copied().collect(),
            noise_variance: variance.max(0.0),
        });
    }

    let topo = graph.topological_order()?;
    Ok(LinearGaussianScm {
        graph: graph.clone(),
        mechanisms,
        topo,
    })
}

impl LinearGaussianScm {
    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn mechanisms(&self) -> &[ScmNode] {
        &self.mechanisms
    }

    fn tier_indices(&self, tier: Tier) -> Vec<usize> {
        self.graph.indices_of_tier(tier)
    }
}

/// Interventional estimate: clamp the option nodes to `x` and the fidelity
/// node to `s` (severing their mechanisms), forward-sample everything else in
/// topological order, and summarize the objective nodes.
///
/// Deterministic for a fixed seed; nodes with zero residual variance draw no
/// noise, so fully deterministic SCMs are exact and independent of `n_mc`.
pub fn do_estimate(
    scm: &LinearGaussianScm,
    x: &[f64],
    s: f64,
    n_mc: usize,
    seed: u64,
) -> Result<DoEstimate> {
    if n_mc == 0 {
        return Err(Error::domain("do_estimate needs n_mc >= 1"));
    }
    let options = scm.tier_indices(Tier::Option);
    let fidelities = scm.tier_indices(Tier::Fidelity);
    let objectives = scm.tier_indices(Tier::Objective);
    if options.len() != x.len() {
        return Err(Error::domain(format!(
            "{} option nodes but {} intervention values",
            options.len(),
            x.len()
        )));
    }
    if objectives.is_empty() {
        return Err(Error::state("SCM has no objective nodes to summarize"));
    }

    let mut clamped: Vec<Option<f64>> = vec![None; scm.graph.len()];
    for (&node, &value) in options.iter().zip(x) {
        clamped[node] = Some(value);
    }
    for &node in &fidelities {
        clamped[node] = Some(s);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = vec![0.0; scm.graph.len()];
    // Welford accumulators: the naive sum-of-squares formula cancels
    // catastrophically when the draws are (near-)deterministic.
    let mut means = vec![0.0; objectives.len()];
    let mut m2s = vec![0.0; objectives.len()];
    let mut count = 0.0;

    for _ in 0..n_mc {
        for &node in &scm.topo {
            values[node] = match clamped[node] {
                Some(v) => v,
                None => {
                    let mech = &scm.mechanisms[node];
                    let mut v = mech.intercept;
                    for (&parent, &w) in mech.parents.iter().zip(&mech.weights) {
                        v += w * values[parent];
                    }
                    if mech.noise_variance > 0.0 {
                        v += unit.sample(&mut rng) * mech.noise_variance.sqrt();
                    }
                    v
                }
            };
        }
        count += 1.0;
        for (k, &node) in objectives.iter().enumerate() {
            let v = values[node];
            let delta = v - means[k];
            means[k] += delta / count;
            m2s[k] += delta * (v - means[k]);
        }
    }

    let std: Vec<f64> = m2s
        .iter()
        .map(|m2| {
            if n_mc < 2 {
                0.0
            } else {
                // Sample variance with Bessel's correction.
                (m2 / (n_mc as f64 - 1.0)).max(0.0).sqrt()
            }
        })
        .collect();
    Ok(DoEstimate { mean: means, std })
}

/// Causal performance model handle: graph + data + fitted SCM + memoized
/// interventional estimates.
#[derive(Debug)]
pub struct CausalModel {
    graph: CausalGraph,
    data: ObservationalData,
    scm: LinearGaussianScm,
    n_mc: usize,
    seed: u64,
    cache: Mutex<HashMap<Vec<i64>, (Vec<f64>, Vec<f64>)>>,
}

impl CausalModel {
    /// Fits the SCM on `data` under a known graph.
    pub fn from_graph(
        graph: CausalGraph,
        data: ObservationalData,
        n_mc: usize,
        seed: u64,
    ) -> Result<Self> {
        let scm = fit_scm(&graph, &data)?;
        Ok(CausalModel {
            graph,
            data,
            scm,
            n_mc,
            seed,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Runs PC discovery first, then fits.
    pub fn discover(
        data: ObservationalData,
        nodes: Vec<Node>,
        config: PcConfig,
        n_mc: usize,
        seed: u64,
    ) -> Result<Self> {
        let graph = pc_discover(&data, nodes, config)?;
        Self::from_graph(graph, data, n_mc, seed)
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn scm(&self) -> &LinearGaussianScm {
        &self.scm
    }

    pub fn observational_rows(&self) -> usize {
        self.data.n_rows()
    }

    /// Appends interventional evaluations as plain data rows and refits the
    /// SCM on the combined table. The graph is kept fixed.
    pub fn update_with(&mut self, dataset: &Dataset) -> Result<()> {
        let options = self.graph.indices_of_tier(Tier::Option);
        let fidelities = self.graph.indices_of_tier(Tier::Fidelity);
        let indicators = self.graph.indices_of_tier(Tier::Indicator);
        let objectives = self.graph.indices_of_tier(Tier::Objective);
        if options.len() != dataset.dim()
            || indicators.len() != dataset.num_constraints()
            || objectives.len() != dataset.num_objectives()
        {
            return Err(Error::domain(format!(
                "dataset shape ({}, {}, {}) does not match graph tiers ({}, {}, {})",
                dataset.dim(),
                dataset.num_objectives(),
                dataset.num_constraints(),
                options.len(),
                objectives.len(),
                indicators.len(),
            )));
        }
        for record in dataset.records() {
            let mut row = vec![0.0; self.graph.len()];
            for (&node, &v) in options.iter().zip(&record.x) {
                row[self.column_slot(node)?] = v;
            }
            for &node in &fidelities {
                row[self.column_slot(node)?] = record.s;
            }
            for (&node, &v) in indicators.iter().zip(&record.h) {
                row[self.column_slot(node)?] = v;
            }
            for (&node, &v) in objectives.iter().zip(&record.y) {
                row[self.column_slot(node)?] = v;
            }
            self.data.push_row(row)?;
        }
        self.scm = fit_scm(&self.graph, &self.data)?;
        self.cache.lock().expect("cache lock").clear();
        Ok(())
    }

    fn column_slot(&self, node: usize) -> Result<usize> {
        let name = &self.graph.nodes()[node].name;
        self.data
            .column_index(name)
            .ok_or_else(|| Error::state(format!("graph node {name} has no data column")))
    }

    /// Memoized interventional estimate at `(x, s)`.
    ///
    /// The Monte Carlo seed is a pure function of the query (quantized to a
    /// 1e-9 grid) and the model seed, so results are independent of call
    /// order and cache state.
    pub fn do_estimate(&self, x: &[f64], s: f64) -> Result<DoEstimate> {
        let key = quantize_query(x, s);
        if let Some((mean, std)) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(DoEstimate {
                mean: mean.clone(),
                std: std.clone(),
            });
        }
        let point_seed = mix_seed(self.seed, &key);
        let estimate = do_estimate(&self.scm, x, s, self.n_mc, point_seed)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, (estimate.mean.clone(), estimate.std.clone()));
        Ok(estimate)
    }
}

impl Clone for CausalModel {
    fn clone(&self) -> Self {
        CausalModel {
            graph: self.graph.clone(),
            data: self.data.clone(),
            scm: self.scm.clone(),
            n_mc: self.n_mc,
            seed: self.seed,
            cache: Mutex::new(self.cache.lock().expect("cache lock").clone()),
        }
    }
}

impl CausalPrior for CausalModel {
    fn mean_and_scale(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let estimate = self.do_estimate(x, s)?;
        Ok((estimate.mean, estimate.std))
    }

    fn num_objectives(&self) -> usize {
        self.graph.indices_of_tier(Tier::Objective).len()
    }
}

fn quantize_query(x: &[f64], s: f64) -> Vec<i64> {
    x.iter()
        .chain(std::iter::once(&s))
        .map(|v| (v / 1e-9).round() as i64)
        .collect()
}

/// FNV-1a over the quantized query; stable across platforms and versions.
fn mix_seed(seed: u64, key: &[i64]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64 ^ seed;
    for k in key {
        for byte in k.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}
