//! Tiered causal DAG over options, indicators, objectives, and the fidelity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which structural role a node plays.
///
/// Tiers induce the only edge directions we accept from orientation:
/// fidelity and options come before indicators, indicators before objectives.
/// The fidelity node is exogenous (nothing may point into it) and objectives
/// may never point back into options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Controllable configuration option (an X node).
    Option,
    /// Non-manipulable performance indicator (a Z node).
    Indicator,
    /// Optimization objective (a Y node).
    Objective,
    /// The evaluation fidelity node.
    Fidelity,
}

impl Tier {
    /// Rank used for low-to-high orientation. The fidelity sits before the
    /// options because no edge may enter it.
    pub fn rank(self) -> u8 {
        match self {
            Tier::Fidelity => 0,
            Tier::Option => 1,
            Tier::Indicator => 2,
            Tier::Objective => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub tier: Tier,
}

/// Directed acyclic graph with tier constraints enforced on every insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    nodes: Vec<Node>,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    nodes: Vec<Node>,
    edges: Vec<(String, String)>,
}

impl CausalGraph {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for node in &nodes {
            if !seen.insert(node.name.clone()) {
                return Err(Error::domain(format!("duplicate node name {}", node.name)));
            }
        }
        Ok(CausalGraph {
            nodes,
            edges: BTreeSet::new(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges in deterministic (from, to) index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn indices_of_tier(&self, tier: Tier) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].tier == tier)
            .collect()
    }

    /// Whether a directed edge is admissible under the tier rules.
    pub fn edge_allowed(&self, from: usize, to: usize) -> bool {
        if from == to || from >= self.nodes.len() || to >= self.nodes.len() {
            return false;
        }
        // Nothing enters the fidelity; objectives never feed options.
        if self.nodes[to].tier == Tier::Fidelity {
            return false;
        }
        if self.nodes[from].tier == Tier::Objective && self.nodes[to].tier == Tier::Option {
            return false;
        }
        true
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if !self.edge_allowed(from, to) {
            return Err(Error::domain(format!(
                "edge {} -> {} violates tier constraints",
                self.nodes.get(from).map(|n| n.name.as_str()).unwrap_or("?"),
                self.nodes.get(to).map(|n| n.name.as_str()).unwrap_or("?")
            )));
        }
        if self.edges.contains(&(to, from)) {
            return Err(Error::domain(format!(
                "edge {} -> {} conflicts with an existing reverse edge",
                self.nodes[from].name, self.nodes[to].name
            )));
        }
        self.edges.insert((from, to));
        if self.topological_order().is_err() {
            self.edges.remove(&(from, to));
            return Err(Error::domain(format!(
                "edge {} -> {} would create a cycle",
                self.nodes[from].name, self.nodes[to].name
            )));
        }
        Ok(())
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(_, to)| *to == node)
            .map(|(from, _)| *from)
            .collect()
    }

    /// Kahn's algorithm; errors if a cycle slipped in.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut in_degree = vec![0usize; n];
        for (_, to) in &self.edges {
            in_degree[*to] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| in_degree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&next) = ready.first() {
            ready.remove(0);
            order.push(next);
            for (from, to) in &self.edges {
                if *from == next {
                    in_degree[*to] -= 1;
                    if in_degree[*to] == 0 {
                        // Keep insertion sorted for a deterministic order.
                        let pos = ready.partition_point(|&r| r < *to);
                        ready.insert(pos, *to);
                    }
                }
            }
        }
        if order.len() != n {
            return Err(Error::state("graph contains a cycle"));
        }
        Ok(order)
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = GraphRepr {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|(f, t)| (self.nodes[*f].name.clone(), self.nodes[*t].name.clone()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let repr: GraphRepr = serde_json::from_str(json)?;
        let mut graph = CausalGraph::new(repr.nodes)?;
        for (from, to) in &repr.edges {
            let f = graph
                .node_index(from)
                .ok_or_else(|| Error::domain(format!("unknown edge endpoint {from}")))?;
            let t = graph
                .node_index(to)
                .ok_or_else(|| Error::domain(format!("unknown edge endpoint {to}")))?;
            graph.add_edge(f, t)?;
        }
        Ok(graph)
    }
}
