//! Pareto-domination primitives and hypervolume indicators.
//!
//! Everything here assumes minimization of every objective. Exact hypervolume
//! covers the two- and three-objective cases (sweep and slicing); higher
//! dimensions go through the Monte Carlo estimator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Smallest regret we report; keeps log-regret finite when a run closes the gap.
pub const REGRET_FLOOR: f64 = 1e-12;

/// Strict Pareto domination: `a` is no worse everywhere and better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strictly_better = false;
    for (ai, bi) in a.iter().zip(b) {
        if ai > bi {
            return false;
        }
        if ai < bi {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Non-dominated subset of `points`, deduplicated and sorted by the first
/// objective (ties broken lexicographically).
pub fn pareto_filter(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut front: Vec<Vec<f64>> = Vec::new();
    'outer: for p in points {
        if front.iter().any(|q| q == p || dominates(q, p)) {
            continue 'outer;
        }
        front.retain(|q| !dominates(p, q));
        front.push(p.clone());
    }
    front.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| *o != std::cmp::Ordering::Equal)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    front
}

fn check_front(points: &[Vec<f64>], reference: &[f64]) -> Result<()> {
    for p in points {
        if p.len() != reference.len() {
            return Err(Error::domain(format!(
                "point dimension {} does not match reference dimension {}",
                p.len(),
                reference.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("front contains non-finite values"));
        }
    }
    if reference.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("reference point contains non-finite values"));
    }
    Ok(())
}

/// Clip points to the reference box; points beyond the reference contribute
/// zero volume but stay in the set.
fn clip_to_reference(points: &[Vec<f64>], reference: &[f64]) -> Vec<Vec<f64>> {
    let mut clipped = Vec::with_capacity(points.len());
    let mut warned = false;
    for p in points {
        if p.iter().zip(reference).any(|(v, r)| v > r) {
            if !warned {
                log::warn!("hypervolume: point above the reference point, clipping");
                warned = true;
            }
            clipped.push(p.iter().zip(reference).map(|(v, r)| v.min(*r)).collect());
        } else {
            clipped.push(p.clone());
        }
    }
    clipped
}

/// Exact dominated hypervolume for two or three objectives.
pub fn hypervolume_exact(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    check_front(points, reference)?;
    if points.is_empty() {
        return Ok(0.0);
    }
    let clipped = clip_to_reference(points, reference);
    let front = pareto_filter(&clipped);
    match reference.len() {
        2 => Ok(hv2(&front, reference)),
        3 => Ok(hv3(&front, reference)),
        m => Err(Error::domain(format!(
            "exact hypervolume supports 2 or 3 objectives, got {m}; use the MC estimator"
        ))),
    }
}

/// Sweep over a front sorted by the first objective. With mutual
/// non-domination the second objective is strictly decreasing, so each point
/// contributes a simple rectangle.
fn hv2(front: &[Vec<f64>], reference: &[f64]) -> f64 {
    let mut hv = 0.0;
    for (i, p) in front.iter().enumerate() {
        let next_x = if i + 1 < front.len() {
            front[i + 1][0]
        } else {
            reference[0]
        };
        hv += (next_x - p[0]) * (reference[1] - p[1]);
    }
    hv
}

/// Slice along the third objective: between consecutive z-levels the dominated
/// area is the 2D hypervolume of everything at or below the slab floor.
fn hv3(front: &[Vec<f64>], reference: &[f64]) -> f64 {
    let mut levels: Vec<f64> = front.iter().map(|p| p[2]).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    levels.push(reference[2]);

    let mut hv = 0.0;
    for w in levels.windows(2) {
        let (z_lo, z_hi) = (w[0], w[1]);
        if z_hi <= z_lo {
            continue;
        }
        let active: Vec<Vec<f64>> = front
            .iter()
            .filter(|p| p[2] <= z_lo)
            .map(|p| vec![p[0], p[1]])
            .collect();
        if active.is_empty() {
            continue;
        }
        let slab_front = pareto_filter(&active);
        hv += hv2(&slab_front, &reference[..2]) * (z_hi - z_lo);
    }
    hv
}

/// Monte Carlo hypervolume estimate for any number of objectives.
///
/// Samples uniformly in the box spanned by the componentwise best of the front
/// and the reference point. Returns `(estimate, std_error)` with
/// `std_error = box_volume * sqrt(p(1-p)/n)`.
pub fn hypervolume_mc(
    points: &[Vec<f64>],
    reference: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_front(points, reference)?;
    if n_samples == 0 {
        return Err(Error::domain("MC hypervolume needs at least one sample"));
    }
    if points.is_empty() {
        return Ok((0.0, 0.0));
    }
    let clipped = clip_to_reference(points, reference);
    let front = pareto_filter(&clipped);
    let m = reference.len();
    let mut lower = vec![f64::INFINITY; m];
    for p in &front {
        for (lo, v) in lower.iter_mut().zip(p) {
            *lo = lo.min(*v);
        }
    }
    let mut volume = 1.0;
    for (lo, r) in lower.iter().zip(reference) {
        volume *= (r - lo).max(0.0);
    }
    if volume == 0.0 {
        return Ok((0.0, 0.0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut sample = vec![0.0; m];
    for _ in 0..n_samples {
        for ((v, lo), r) in sample.iter_mut().zip(&lower).zip(reference) {
            *v = rng.gen_range(*lo..*r);
        }
        if front
            .iter()
            .any(|p| p.iter().zip(&sample).all(|(pi, si)| pi <= si))
        {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / n_samples as f64;
    let estimate = volume * p_hat;
    let std_error = volume * (p_hat * (1.0 - p_hat) / n_samples as f64).sqrt();
    Ok((estimate, std_error))
}

/// Reference point from the worst observed objective vector: each coordinate
/// is pushed 10% away from the front (`worst + 0.1*|worst|`, with a 0.1 floor
/// for zero coordinates so the margin never vanishes).
pub fn reference_from_worst(worst: &[f64]) -> Vec<f64> {
    worst
        .iter()
        .map(|w| {
            let margin = (0.1 * w.abs()).max(if *w == 0.0 { 0.1 } else { 0.0 });
            w + margin
        })
        .collect()
}

/// Base-10 log of the hypervolume gap, floored at [`REGRET_FLOOR`].
pub fn log_hv_regret(hv_star: f64, hv: f64) -> f64 {
    (hv_star - hv).max(REGRET_FLOOR).log10()
}

/// Trapezoidal area under a regret-versus-cost curve.
///
/// Costs must be non-decreasing; the curve is whatever regret series the
/// caller tracked (usually best-so-far log regret).
pub fn area_under_regret(costs: &[f64], regrets: &[f64]) -> Result<f64> {
    if costs.len() != regrets.len() {
        return Err(Error::domain(format!(
            "costs ({}) and regrets ({}) length mismatch",
            costs.len(),
            regrets.len()
        )));
    }
    if costs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("costs must be non-decreasing"));
    }
    let mut area = 0.0;
    for i in 1..costs.len() {
        area += 0.5 * (regrets[i] + regrets[i - 1]) * (costs[i] - costs[i - 1]);
    }
    Ok(area)
}
