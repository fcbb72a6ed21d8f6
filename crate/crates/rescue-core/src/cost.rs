//! Evaluation cost models.
//!
//! Costs drive both the budget accounting and the cost-normalization of the
//! acquisition function; they must be strictly positive everywhere.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Cost of evaluating a configuration at a fidelity.
#[derive(Clone)]
pub enum CostModel {
    /// `c(x, s) = exp(rate * s)` — fidelity-only exponential growth.
    Exponential { rate: f64 },
    /// Explicit per-fidelity table for finite fidelity sets.
    Table(Vec<(f64, f64)>),
    /// Arbitrary user-supplied cost function (not serializable).
    Custom(fn(&[f64], f64) -> f64),
}

impl CostModel {
    /// Evaluation cost at `(x, s)`. Always strictly positive on success.
    pub fn cost(&self, x: &[f64], s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::domain(format!("non-finite fidelity {s}")));
        }
        let c = match self {
            CostModel::Exponential { rate } => (rate * s).exp(),
            CostModel::Table(entries) => entries
                .iter()
                .find(|(level, _)| (level - s).abs() <= 1e-12)
                .map(|(_, c)| *c)
                .ok_or_else(|| Error::domain(format!("fidelity {s} not in cost table")))?,
            CostModel::Custom(f) => f(x, s),
        };
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::domain(format!("cost must be positive, got {c}")));
        }
        Ok(c)
    }

    /// Cheapest cost over the given fidelity levels (configuration-independent forms only).
    pub fn min_over(&self, levels: &[f64]) -> Result<f64> {
        let mut best = f64::INFINITY;
        for &s in levels {
            best = best.min(self.cost(&[], s)?);
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::domain("no fidelity levels to take a minimum over"))
        }
    }
}

impl std::fmt::Debug for CostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostModel::Exponential { rate } => write!(f, "Exponential {{ rate: {rate} }}"),
            CostModel::Table(entries) => write!(f, "Table({entries:?})"),
            CostModel::Custom(_) => write!(f, "Custom(<fn>)"),
        }
    }
}

impl PartialEq for CostModel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (CostModel::Exponential { rate: a }, CostModel::Exponential { rate: b }) => a == b,
            (CostModel::Table(a), CostModel::Table(b)) => a == b,
            (CostModel::Custom(a), CostModel::Custom(b)) => std::ptr::fn_addr_eq(*a, *b),
            _ => false,
        }
    }
}

// Serialized shape: {"form": "exponential", "rate": 4.8} or
// {"form": "table", "entries": [[0.5, 2.0], ...]}. Custom cannot round-trip.
#[derive(Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
enum CostModelRepr {
    Exponential { rate: f64 },
    Table { entries: Vec<(f64, f64)> },
}

impl Serialize for CostModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            CostModel::Exponential { rate } => CostModelRepr::Exponential { rate: *rate },
            CostModel::Table(entries) => CostModelRepr::Table {
                entries: entries.clone(),
            },
            CostModel::Custom(_) => {
                return Err(serde::ser::Error::custom(
                    "custom cost functions cannot be serialized",
                ))
            }
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CostModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let model = match CostModelRepr::deserialize(deserializer)? {
            CostModelRepr::Exponential { rate } => CostModel::Exponential { rate },
            CostModelRepr::Table { entries } => CostModel::Table(entries),
        };
        if let CostModel::Table(entries) = &model {
            if entries.iter().any(|(_, c)| !c.is_finite() || *c <= 0.0) {
                return Err(D::Error::custom("table costs must be positive"));
            }
        }
        Ok(model)
    }
}
