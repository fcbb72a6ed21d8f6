//! Self-contained benchmark problems, a grid oracle for ground-truth Pareto
//! fronts, and observational-data generators for the causal layer.

pub mod adversarial;
pub mod collision;
pub mod healthcare;
pub mod synthetic;

pub use adversarial::{bias_field, AdversarialBiasProblem};
pub use collision::{collision_risk_score, CollisionRiskInputs};
pub use healthcare::{
    healthcare_eval, HealthcareProblem, CANCER_THRESHOLD_DEFAULT, CANCER_THRESHOLD_STRICT,
};
pub use synthetic::{
    branin, branin_currin_eval, currin, park1, park2, park_eval, BraninCurrinProblem, ParkProblem,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::causal::ObservationalData;
use crate::pareto::{hypervolume_exact, pareto_filter, reference_from_worst};
use crate::problem::Problem;
use crate::space::FidelitySpace;
use crate::{Error, Result};

/// Knobs the registry exposes; everything else is fixed per problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkParams {
    /// Cross-fidelity bias magnitude for the adversarial problem.
    pub delta_scale: f64,
    /// Cancer-risk threshold preset for healthcare.
    pub cancer_threshold: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            delta_scale: 10.0,
            cancer_threshold: CANCER_THRESHOLD_DEFAULT,
        }
    }
}

pub const PROBLEM_NAMES: [&str; 4] = ["healthcare", "branin-currin", "park", "adversarial"];

/// Look a benchmark up by its CLI name.
pub fn by_name(name: &str, params: &BenchmarkParams) -> Result<Box<dyn Problem>> {
    match name {
        "healthcare" => Ok(Box::new(HealthcareProblem::new(params.cancer_threshold)?)),
        "branin-currin" => Ok(Box::new(BraninCurrinProblem::new()?)),
        "park" => Ok(Box::new(ParkProblem::new()?)),
        "adversarial" => Ok(Box::new(AdversarialBiasProblem::new(params.delta_scale)?)),
        other => Err(Error::config(format!(
            "unknown problem {other:?}; expected one of {PROBLEM_NAMES:?}"
        ))),
    }
}

/// Ground-truth front of a benchmark, computed on a dense target-fidelity
/// grid.
#[derive(Debug, Clone)]
pub struct OracleFront {
    /// Nondominated feasible objective vectors (minimization convention).
    pub points: Vec<Vec<f64>>,
    /// Reference point frozen from the worst feasible values seen.
    pub reference: Vec<f64>,
    pub hv_star: f64,
}

/// Everything the dense grid evaluation produced, not just the front:
/// feasible configurations with their true target-fidelity objectives.
#[derive(Debug, Clone)]
pub struct OracleGrid {
    /// Feasible configurations in grid iteration order.
    pub points: Vec<Vec<f64>>,
    /// True objective vectors (minimization convention), aligned with `points`.
    pub objectives: Vec<Vec<f64>>,
    pub front: OracleFront,
}

/// Axis-aligned lattice over `bounds` with `per_dim[k]` evenly spaced levels
/// on axis `k`, endpoints included. Rows come out in mixed-radix order with
/// the first axis fastest.
pub fn grid_points(bounds: &[(f64, f64)], per_dim: &[usize]) -> Result<Vec<Vec<f64>>> {
    let d = bounds.len();
    if per_dim.len() != d || per_dim.iter().any(|&n| n < 2) {
        return Err(Error::domain(
            "grid needs one resolution >= 2 per dimension",
        ));
    }
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .zip(per_dim)
        .map(|(&(lo, hi), &n)| {
            (0..n)
                .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                .collect()
        })
        .collect();

    let total: usize = per_dim.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut index = vec![0usize; d];
    loop {
        out.push(index.iter().enumerate().map(|(k, &i)| axes[k][i]).collect());
        // Mixed-radix increment over the grid.
        let mut k = 0;
        loop {
            if k == d {
                return Ok(out);
            }
            index[k] += 1;
            if index[k] < per_dim[k] {
                break;
            }
            index[k] = 0;
            k += 1;
        }
    }
}

/// Grid oracle with `grid_n` points per dimension.
pub fn oracle_pareto(problem: &dyn Problem, grid_n: usize) -> Result<OracleFront> {
    oracle_pareto_with(problem, &vec![grid_n; problem.spec().dims])
}

/// Grid oracle with an explicit per-dimension resolution, e.g. 200 x 50.
pub fn oracle_pareto_with(problem: &dyn Problem, grid: &[usize]) -> Result<OracleFront> {
    Ok(oracle_grid(problem, grid)?.front)
}

/// Dense target-fidelity sweep keeping the feasible configurations and their
/// objectives alongside the induced front.
pub fn oracle_grid(problem: &dyn Problem, grid: &[usize]) -> Result<OracleGrid> {
    let spec = problem.spec();
    let d = spec.dims;
    if d > 4 {
        return Err(Error::domain(format!(
            "grid oracle supports at most 4 dimensions, problem has {d}"
        )));
    }
    let lattice = grid_points(&spec.bounds, grid)?;

    let mut points = Vec::new();
    let mut objectives = Vec::new();
    let mut worst = vec![f64::NEG_INFINITY; spec.m];
    for x in lattice {
        let (y, h) = problem.evaluate_target(&x)?;
        if problem.is_feasible(&h) {
            for (w, v) in worst.iter_mut().zip(&y) {
                *w = w.max(*v);
            }
            points.push(x);
            objectives.push(y);
        }
    }
    let front_points = pareto_filter(&objectives);
    if front_points.is_empty() {
        return Err(Error::state(
            "no feasible point on the oracle grid; refine it or relax the constraint",
        ));
    }
    let reference = reference_from_worst(&worst);
    let hv_star = hypervolume_exact(&front_points, &reference)?;
    Ok(OracleGrid {
        points,
        objectives,
        front: OracleFront {
            points: front_points,
            reference,
            hv_star,
        },
    })
}

/// How fidelities are assigned when generating observational data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationalMode {
    /// Uniform over the fidelity space.
    Uniform,
    /// Every row at the target fidelity.
    TargetOnly,
}

/// Draw `n` observational rows from a benchmark: uniform configurations,
/// fidelities per `mode`, Gaussian noise of `noise_std` on the metric
/// columns. Column order follows [`crate::problem::ProblemSpec::causal_nodes`].
pub fn observational_sample(
    problem: &dyn Problem,
    n: usize,
    noise_std: f64,
    mode: ObservationalMode,
    seed: u64,
) -> Result<ObservationalData> {
    if n == 0 {
        return Err(Error::domain("observational sample size must be positive"));
    }
    if !noise_std.is_finite() || noise_std < 0.0 {
        return Err(Error::domain(format!(
            "noise level {noise_std} must be finite and nonnegative"
        )));
    }
    let spec = problem.spec();
    let columns: Vec<String> = spec.causal_nodes().into_iter().map(|n| n.name).collect();
    let mut data = ObservationalData::new(columns)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::domain(e.to_string()))?;
    for _ in 0..n {
        let x: Vec<f64> = spec
            .bounds
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect();
        let s = match mode {
            ObservationalMode::TargetOnly => crate::space::TARGET_FIDELITY,
            ObservationalMode::Uniform => match &spec.fidelities {
                FidelitySpace::Discrete { values } => values[rng.gen_range(0..values.len())],
                FidelitySpace::Continuous { min } => rng.gen_range(*min..=1.0),
            },
        };
        let (y, h) = problem.evaluate(&x, s)?;
        let mut row = Vec::with_capacity(spec.dims + 1 + spec.q + spec.m);
        row.extend(&x);
        row.push(s);
        for v in h {
            row.push(v + if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 });
        }
        for v in y {
            row.push(v + if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 });
        }
        data.push_row(row)?;
    }
    Ok(data)
}
