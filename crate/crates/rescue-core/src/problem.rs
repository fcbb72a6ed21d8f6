//! Problem descriptions: spaces, objectives, constraints, and cost bundled
//! behind one trait, plus a JSON-serializable spec for external tools.

use serde::{Deserialize, Serialize};

use crate::causal::{Node, Tier};
use crate::cost::CostModel;
use crate::space::{ConfigSpace, FidelitySpace, TARGET_FIDELITY};
use crate::{Error, Result};

/// Which side of the threshold counts as feasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintDirection {
    /// Feasible when `h <= threshold`.
    AtMost,
    /// Feasible when `h >= threshold`.
    AtLeast,
}

/// One feasibility constraint on a monitored metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub name: String,
    pub value: f64,
    pub direction: ConstraintDirection,
}

impl ConstraintSpec {
    pub fn is_satisfied(&self, h: f64) -> bool {
        match self.direction {
            ConstraintDirection::AtMost => h <= self.value,
            ConstraintDirection::AtLeast => h >= self.value,
        }
    }

    /// Signed slack, positive when satisfied; used for violation magnitudes.
    pub fn slack(&self, h: f64) -> f64 {
        match self.direction {
            ConstraintDirection::AtMost => self.value - h,
            ConstraintDirection::AtLeast => h - self.value,
        }
    }
}

/// Serializable problem description.
///
/// `directions` holds objective senses ("min"/"max"); each `thresholds` entry
/// carries its own inequality direction. Objectives flagged "max" are negated
/// at ingestion so everything downstream minimizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub dims: usize,
    pub bounds: Vec<(f64, f64)>,
    pub fidelities: FidelitySpace,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub thresholds: Vec<ConstraintSpec>,
    pub directions: Vec<ObjectiveDirection>,
    pub cost: CostModel,
    /// Variable labels for causal modeling and reports. Empty lists fall back
    /// to generated `x{i}` / `y{i}` names.
    #[serde(default)]
    pub option_names: Vec<String>,
    #[serde(default)]
    pub objective_names: Vec<String>,
    #[serde(default = "default_fidelity_name")]
    pub fidelity_name: String,
}

fn default_fidelity_name() -> String {
    "s".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveDirection {
    Min,
    Max,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() != self.dims {
            return Err(Error::config(format!(
                "problem {}: {} bounds for {} dims",
                self.name,
                self.bounds.len(),
                self.dims
            )));
        }
        if self.directions.len() != self.m {
            return Err(Error::config(format!(
                "problem {}: {} objective directions for M={}",
                self.name,
                self.directions.len(),
                self.m
            )));
        }
        if self.thresholds.len() != self.q {
            return Err(Error::config(format!(
                "problem {}: {} thresholds for Q={}",
                self.name,
                self.thresholds.len(),
                self.q
            )));
        }
        if !self.option_names.is_empty() && self.option_names.len() != self.dims {
            return Err(Error::config(format!(
                "problem {}: {} option names for {} dims",
                self.name,
                self.option_names.len(),
                self.dims
            )));
        }
        if !self.objective_names.is_empty() && self.objective_names.len() != self.m {
            return Err(Error::config(format!(
                "problem {}: {} objective names for M={}",
                self.name,
                self.objective_names.len(),
                self.m
            )));
        }
        ConfigSpace::new(self.bounds.clone())?;
        Ok(())
    }

    pub fn config_space(&self) -> ConfigSpace {
        ConfigSpace::new(self.bounds.clone()).expect("validated bounds")
    }

    pub fn option_name(&self, i: usize) -> String {
        self.option_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("x{i}"))
    }

    pub fn objective_name(&self, k: usize) -> String {
        self.objective_names
            .get(k)
            .cloned()
            .unwrap_or_else(|| format!("y{k}"))
    }

    /// Node set for causal modeling, listed in the declaration order the
    /// observation-to-column mapping relies on: options, fidelity, constraint
    /// metrics, objectives.
    pub fn causal_nodes(&self) -> Vec<Node> {
        let mut nodes = Vec::with_capacity(self.dims + 1 + self.q + self.m);
        for i in 0..self.dims {
            nodes.push(Node {
                name: self.option_name(i),
                tier: Tier::Option,
            });
        }
        nodes.push(Node {
            name: self.fidelity_name.clone(),
            tier: Tier::Fidelity,
        });
        for c in &self.thresholds {
            nodes.push(Node {
                name: c.name.clone(),
                tier: Tier::Indicator,
            });
        }
        for k in 0..self.m {
            nodes.push(Node {
                name: self.objective_name(k),
                tier: Tier::Objective,
            });
        }
        nodes
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: ProblemSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A multi-fidelity, multi-objective problem with feasibility constraints.
pub trait Problem: Send + Sync {
    fn spec(&self) -> &ProblemSpec;

    /// Raw metrics at `(x, s)`: objectives in their native senses plus
    /// constraint metrics. Deterministic; observation noise is a harness
    /// concern.
    fn evaluate_raw(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)>;

    /// Objectives in the internal minimization convention, plus constraint
    /// metrics. Checks the query against both spaces.
    fn evaluate(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let spec = self.spec();
        if !spec.config_space().contains(x) {
            return Err(Error::domain(format!(
                "configuration {x:?} outside the bounds of {}",
                spec.name
            )));
        }
        if !spec.fidelities.contains(s) {
            return Err(Error::domain(format!(
                "fidelity {s} outside the fidelity space of {}",
                spec.name
            )));
        }
        let (mut y, h) = self.evaluate_raw(x, s)?;
        for (v, dir) in y.iter_mut().zip(&spec.directions) {
            if *dir == ObjectiveDirection::Max {
                *v = -*v;
            }
        }
        Ok((y, h))
    }

    /// Target-fidelity evaluation shorthand.
    fn evaluate_target(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.evaluate(x, TARGET_FIDELITY)
    }

    fn is_feasible(&self, h: &[f64]) -> bool {
        self.spec()
            .thresholds
            .iter()
            .zip(h)
            .all(|(c, v)| c.is_satisfied(*v))
    }
}
