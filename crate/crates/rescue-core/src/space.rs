//! Configuration and fidelity spaces.
//!
//! A configuration space is a box in R^d; a fidelity space is either a finite
//! set of levels or an interval, with the target fidelity always at 1.0.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Box-bounded configuration space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    bounds: Vec<(f64, f64)>,
}

impl ConfigSpace {
    /// Builds a space from per-dimension `(lower, upper)` bounds.
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::domain("config space needs at least one dimension"));
        }
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::domain(format!(
                    "invalid bounds for dimension {i}: ({lo}, {hi})"
                )));
            }
        }
        Ok(ConfigSpace { bounds })
    }

    /// Unit box in `d` dimensions.
    pub fn unit(d: usize) -> Self {
        ConfigSpace::new(vec![(0.0, 1.0); d]).expect("unit box is always valid")
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    }

    /// Maps a configuration into the unit box.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(x) {
            return Err(Error::domain(format!(
                "configuration {x:?} outside bounds {:?}",
                self.bounds
            )));
        }
        Ok(x.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect())
    }

    /// Maps a unit-box point back to the original bounds.
    pub fn denormalize(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.bounds.len() {
            return Err(Error::domain(format!(
                "expected {} coordinates, got {}",
                self.bounds.len(),
                u.len()
            )));
        }
        if u.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::domain(format!("unit point {u:?} outside [0,1]^d")));
        }
        Ok(u.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| lo + v * (hi - lo))
            .collect())
    }

    /// Clamps a point onto the box, coordinate by coordinate.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }
}

/// Fidelity space with target fidelity 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FidelitySpace {
    /// Finite set of levels, ascending, ending at 1.0.
    Discrete { values: Vec<f64> },
    /// Interval `[min, 1.0]`.
    Continuous { min: f64 },
}

/// The target fidelity every run ultimately cares about.
pub const TARGET_FIDELITY: f64 = 1.0;

impl FidelitySpace {
    pub fn discrete(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("fidelity space needs at least one level"));
        }
        let sorted = values.windows(2).all(|w| w[0] < w[1]);
        let in_range = values.iter().all(|s| s.is_finite() && *s >= 0.0 && *s <= 1.0);
        if !sorted || !in_range || *values.last().unwrap() != TARGET_FIDELITY {
            return Err(Error::domain(format!(
                "discrete fidelities must be ascending within [0,1] and end at 1.0, got {values:?}"
            )));
        }
        Ok(FidelitySpace::Discrete { values })
    }

    pub fn continuous(min: f64) -> Result<Self> {
        if !min.is_finite() || !(0.0..TARGET_FIDELITY).contains(&min) {
            return Err(Error::domain(format!(
                "continuous fidelity minimum must lie in [0,1), got {min}"
            )));
        }
        Ok(FidelitySpace::Continuous { min })
    }

    pub fn contains(&self, s: f64) -> bool {
        if !s.is_finite() {
            return false;
        }
        match self {
            FidelitySpace::Discrete { values } => {
                values.iter().any(|v| (v - s).abs() <= 1e-12)
            }
            FidelitySpace::Continuous { min } => s >= *min && s <= TARGET_FIDELITY,
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            FidelitySpace::Discrete { values } => values[0],
            FidelitySpace::Continuous { min } => *min,
        }
    }

    /// Representative levels used by discrete acquisition search: all levels for
    /// finite spaces, `n` evenly spaced levels (endpoints included) otherwise.
    pub fn levels(&self, n: usize) -> Vec<f64> {
        match self {
            FidelitySpace::Discrete { values } => values.clone(),
            FidelitySpace::Continuous { min } => {
                if n <= 1 {
                    return vec![TARGET_FIDELITY];
                }
                (0..n)
                    .map(|i| min + (TARGET_FIDELITY - min) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        }
    }
}
