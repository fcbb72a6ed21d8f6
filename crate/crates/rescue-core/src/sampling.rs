//! Cost-aware initialization sampling and quasi-random candidate generation.
//!
//! Initial designs draw configurations uniformly and fidelities with
//! probability proportional to inverse cost, so cheap fidelities dominate the
//! warm-up data. Candidate sets for acquisition search come from Sobol or
//! Latin hypercube sequences.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sobol::params::JoeKuoD6;
use sobol::Sobol;

use crate::cost::CostModel;
use crate::data::{Dataset, Observation};
use crate::problem::Problem;
use crate::space::{ConfigSpace, FidelitySpace};
use crate::{Error, Result};

/// Grid resolution for numeric inversion of the continuous fidelity CDF.
const INVERSE_CDF_GRID: usize = 512;

/// How many consecutive over-budget draws we tolerate before giving up.
const MAX_CONSECUTIVE_SKIPS: usize = 100;

/// Quasi-random family for candidate generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrKind {
    /// Sobol sequence; randomized by a seeded Cranley-Patterson rotation
    /// (seed 0 keeps the raw sequence, whose first point is the origin).
    Sobol,
    /// Latin hypercube: one sample per stratum of width 1/n in every dimension.
    Lhs,
}

/// Inverse-cost fidelity draw: maps `u in [0,1]` through the CDF of
/// `p(s) proportional to 1/c(x,s)`.
///
/// Discrete spaces use the normalized inverse-cost weights directly (first
/// level whose cumulative weight reaches `u`); continuous spaces invert the
/// normalized integral numerically on a 512-point trapezoid grid.
pub fn fidelity_inverse_cdf(space: &FidelitySpace, cost: &CostModel, u: f64) -> Result<f64> {
    if !u.is_finite() || !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("inverse CDF needs u in [0,1], got {u}")));
    }
    match space {
        FidelitySpace::Discrete { values } => {
            let weights: Vec<f64> = values
                .iter()
                .map(|&s| cost.cost(&[], s).map(|c| 1.0 / c))
                .collect::<Result<_>>()?;
            let total: f64 = weights.iter().sum();
            let mut cumulative = 0.0;
            for (&s, w) in values.iter().zip(&weights) {
                cumulative += w / total;
                if cumulative >= u {
                    return Ok(s);
                }
            }
            Ok(*values.last().unwrap())
        }
        FidelitySpace::Continuous { min } => {
            let lo = *min;
            let hi = crate::space::TARGET_FIDELITY;
            let step = (hi - lo) / (INVERSE_CDF_GRID - 1) as f64;
            let grid: Vec<f64> = (0..INVERSE_CDF_GRID).map(|i| lo + i as f64 * step).collect();
            let density: Vec<f64> = grid
                .iter()
                .map(|&s| cost.cost(&[], s).map(|c| 1.0 / c))
                .collect::<Result<_>>()?;
            // Cumulative trapezoid, then normalize to a CDF.
            let mut cdf = vec![0.0; INVERSE_CDF_GRID];
            for i in 1..INVERSE_CDF_GRID {
                cdf[i] = cdf[i - 1] + 0.5 * (density[i] + density[i - 1]) * step;
            }
            let total = cdf[INVERSE_CDF_GRID - 1];
            if total <= 0.0 {
                return Err(Error::domain("inverse-cost density integrates to zero"));
            }
            for v in &mut cdf {
                *v /= total;
            }
            let target = u;
            let idx = cdf.partition_point(|&v| v < target);
            if idx == 0 {
                return Ok(grid[0]);
            }
            if idx >= INVERSE_CDF_GRID {
                return Ok(grid[INVERSE_CDF_GRID - 1]);
            }
            let (c0, c1) = (cdf[idx - 1], cdf[idx]);
            let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
            Ok(grid[idx - 1] + t * step)
        }
    }
}

/// Cost-aware warm-up sampling: uniform configurations, inverse-cost
/// fidelities, skip-and-continue when a draw would exceed the budget.
///
/// Stops when even the cheapest fidelity no longer fits or after
/// [`MAX_CONSECUTIVE_SKIPS`] over-budget draws in a row. Never exceeds
/// `budget`. Errors when the budget cannot fund a single evaluation.
pub fn initial_sample(problem: &dyn Problem, budget: f64, seed: u64) -> Result<Dataset> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::domain(format!("initial budget must be positive, got {budget}")));
    }
    let spec = problem.spec();
    let space = spec.config_space();
    let cheapest = spec
        .cost
        .min_over(&spec.fidelities.levels(INVERSE_CDF_GRID))?;

    let mut dataset = Dataset::new(spec.dims, spec.m, spec.q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spent = 0.0;
    let mut consecutive_skips = 0usize;

    loop {
        if spent + cheapest > budget || consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
            break;
        }
        let x: Vec<f64> = space
            .bounds()
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        let s = fidelity_inverse_cdf(&spec.fidelities, &spec.cost, rng.gen_range(0.0..1.0))?;
        let cost = spec.cost.cost(&x, s)?;
        if spent + cost > budget {
            consecutive_skips += 1;
            continue;
        }
        let (y, h) = problem.evaluate(&x, s)?;
        dataset.push(Observation { x, s, y, h, cost })?;
        spent += cost;
        consecutive_skips = 0;
    }

    if dataset.is_empty() {
        return Err(Error::domain(format!(
            "budget {budget} below the cheapest evaluation cost {cheapest}"
        )));
    }
    Ok(dataset)
}

/// Quasi-random candidate configurations, denormalized into the space bounds.
///
/// Sobol falls back to Latin hypercube above 64 dimensions.
pub fn quasi_random_candidates(
    space: &ConfigSpace,
    n: usize,
    kind: QrKind,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::domain("candidate generation needs n >= 1"));
    }
    let d = space.dim();
    let unit: Vec<Vec<f64>> = match kind {
        QrKind::Sobol if d <= 64 => {
            let params = JoeKuoD6::minimal();
            let raw: Vec<Vec<f64>> = Sobol::<f64>::new(d, &params).take(n).collect();
            if seed == 0 {
                raw
            } else {
                // Cranley-Patterson rotation keeps the low-discrepancy
                // structure while randomizing the point set.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let shift: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
                raw.into_iter()
                    .map(|p| {
                        p.iter()
                            .zip(&shift)
                            .map(|(v, sh)| (v + sh).fract())
                            .collect()
                    })
                    .collect()
            }
        }
        QrKind::Sobol => {
            log::warn!("Sobol requested for d={d} > 64; falling back to Latin hypercube");
            latin_hypercube(n, d, seed)
        }
        QrKind::Lhs => latin_hypercube(n, d, seed),
    };
    // The unit box is half-open in practice; clamp guards the s=1.0 edge of
    // rotated points before denormalize's closed-interval check.
    unit.iter()
        .map(|p| {
            let clamped: Vec<f64> = p.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            space.denormalize(&clamped)
        })
        .collect()
}

fn latin_hypercube(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let column: Vec<f64> = strata
            .into_iter()
            .map(|k| (k as f64 + rng.gen_range(0.0..1.0)) / n as f64)
            .collect();
        columns.push(column);
    }
    (0..n)
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect()
}
