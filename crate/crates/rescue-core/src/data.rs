//! Observations and evaluation datasets.

use serde::{Deserialize, Serialize};

use crate::space::TARGET_FIDELITY;
use crate::{Error, Result};

/// One evaluated configuration.
///
/// `y` holds objectives in the internal minimization convention (maximized
/// objectives are negated at ingestion); `h` holds raw constraint metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub s: f64,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub cost: f64,
}

/// Kahan compensated accumulator, so long cost sums don't drift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let y = value - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Append-only set of observations with fixed shapes `(d, m, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    d: usize,
    m: usize,
    q: usize,
    records: Vec<Observation>,
    cumulative: KahanSum,
}

impl Dataset {
    pub fn new(d: usize, m: usize, q: usize) -> Self {
        Dataset {
            d,
            m,
            q,
            records: Vec::new(),
            cumulative: KahanSum::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_objectives(&self) -> usize {
        self.m
    }

    pub fn num_constraints(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    /// Total evaluation cost spent so far (compensated sum).
    pub fn cumulative_cost(&self) -> f64 {
        self.cumulative.value()
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if obs.x.len() != self.d || obs.y.len() != self.m || obs.h.len() != self.q {
            return Err(Error::domain(format!(
                "observation shape ({}, {}, {}) does not match dataset ({}, {}, {})",
                obs.x.len(),
                obs.y.len(),
                obs.h.len(),
                self.d,
                self.m,
                self.q
            )));
        }
        let finite = obs.x.iter().chain(&obs.y).chain(&obs.h).all(|v| v.is_finite())
            && obs.s.is_finite();
        if !finite {
            return Err(Error::domain("observation contains non-finite values"));
        }
        if !obs.cost.is_finite() || obs.cost <= 0.0 {
            return Err(Error::domain(format!("observation cost must be positive, got {}", obs.cost)));
        }
        self.cumulative.add(obs.cost);
        self.records.push(obs);
        debug_assert!({
            let naive: f64 = self.records.iter().map(|r| r.cost).sum();
            (self.cumulative.value() - naive).abs() <= 1e-9 * naive.max(1.0)
        });
        Ok(())
    }

    /// Records taken at the target fidelity.
    pub fn target_fidelity_records(&self) -> impl Iterator<Item = &Observation> {
        self.records
            .iter()
            .filter(|r| (r.s - TARGET_FIDELITY).abs() <= 1e-12)
    }

    /// Per-objective standardization of `y`: zero mean, unit population variance.
    ///
    /// Returns (standardized rows, means, stds); stds are floored at 1e-9 so
    /// constant objectives stay finite. Needs at least two records.
    pub fn standardize_outputs(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        standardize(&self.records.iter().map(|r| r.y.clone()).collect::<Vec<_>>())
    }
}

/// Standardizes columns of a row-major matrix to zero mean and unit population
/// variance, flooring stds at 1e-9.
pub fn standardize(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::state(format!(
            "standardization needs at least 2 rows, got {n}"
        )));
    }
    let m = rows[0].len();
    let mut means = vec![0.0; m];
    for row in rows {
        for (acc, v) in means.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for acc in &mut means {
        *acc /= n as f64;
    }
    let mut stds = vec![0.0; m];
    for row in rows {
        for ((acc, v), mu) in stds.iter_mut().zip(row).zip(&means) {
            *acc += (v - mu) * (v - mu);
        }
    }
    for acc in &mut stds {
        *acc = (*acc / n as f64).sqrt().max(1e-9);
    }
    let standardized = rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(means.iter().zip(&stds))
                .map(|(v, (mu, sd))| (v - mu) / sd)
                .collect()
        })
        .collect();
    Ok((standardized, means, stds))
}
