//! Empirical checks of the regret bound on desk-scale problems.
//!
//! The guarantee has the shape
//!
//! ```text
//! HV* − HV(P_t)  ≤  L · (β_t^{1/2} · max_x ‖σ_t(x, s⋄)‖ + ξ)
//! ```
//!
//! with `L` a hypervolume Lipschitz constant, `ξ` the sup-norm error of the
//! causal prior, and `β_t` a nondecreasing confidence schedule. None of the
//! constants are observable directly, so this module estimates each one from
//! the problem itself — `L` from perturbed oracle fronts, `ξ` by sweeping the
//! prior against closed-form evaluations — and then replays a finished run's
//! instrumentation against the inequality. Everything quantifies over a dense
//! finite grid standing in for the design space.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionConfig, Chvkg};
use crate::benchmarks::{
    by_name, grid_points, observational_sample, oracle_pareto_with, ObservationalMode, OracleFront,
};
use crate::causal::{AgnosticPrior, CausalModel, CausalPrior, PcConfig};
use crate::pareto::hypervolume_exact;
use crate::problem::{Problem, ProblemSpec};
use crate::runner::{run_problem, sub_seed, Method, RunConfig, RunLog};
use crate::space::{FidelitySpace, TARGET_FIDELITY};
use crate::surrogate::SurrogatePair;
use crate::{Error, Result};

/// Failure probability the default confidence schedule is calibrated to.
pub const DEFAULT_RHO: f64 = 0.05;

/// Documented harness threshold for the bias-robustness experiment: the
/// method's regret at the largest bias may grow by at most this factor over
/// its own zero-bias baseline.
pub const BIAS_RATIO_LIMIT: f64 = 2.0;

/// Everything the bound needs besides the run itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Estimated hypervolume Lipschitz constant.
    pub l_hat: f64,
    /// Estimated sup-norm error of the prior mean.
    pub xi_hat: f64,
    /// Confidence schedule, `beta[t - 1]` for iteration `t`.
    pub beta: Vec<f64>,
    /// Norm proxy for the surrogate's function class; carried for reporting.
    pub b_proxy: f64,
    /// Smallest evaluation cost on the fidelity ladder.
    pub c_min: f64,
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l_hat", self.l_hat),
            ("xi_hat", self.xi_hat),
            ("b_proxy", self.b_proxy),
            ("c_min", self.c_min),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!(
                    "bound constant {name} = {v} must be finite and nonnegative"
                )));
            }
        }
        if self.c_min <= 0.0 {
            return Err(Error::domain("c_min must be strictly positive"));
        }
        if self.beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::domain("beta schedule must be finite and nonnegative"));
        }
        if self.beta.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("beta schedule must be nondecreasing"));
        }
        Ok(())
    }
}

/// The logarithmic confidence schedule `β_t = 2·ln(|grid|·t²·π² / (6ρ))` for
/// `t = 1..=t_max`. Any nondecreasing schedule fits the bound's form; this is
/// the standard union-bound calibration over a grid of `grid_size` designs.
pub fn beta_schedule(grid_size: usize, rho: f64, t_max: usize) -> Result<Vec<f64>> {
    if grid_size == 0 {
        return Err(Error::domain("beta schedule needs a nonempty grid"));
    }
    if !(0.0..1.0).contains(&rho) || rho <= 0.0 {
        return Err(Error::domain(format!(
            "failure probability rho = {rho} must lie in (0, 1)"
        )));
    }
    Ok((1..=t_max)
        .map(|t| {
            let t = t as f64;
            2.0 * (grid_size as f64 * t * t * std::f64::consts::PI.powi(2) / (6.0 * rho)).ln()
        })
        .collect())
}

/// Per-iteration evaluation of the bound on a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    pub t: Vec<usize>,
    /// Inference regret `HV* − HV(P_t)` per iteration.
    pub lhs: Vec<f64>,
    /// `L̂ · (β_t^{1/2} · max ‖σ_t‖ + ξ̂)` per iteration.
    pub rhs: Vec<f64>,
    pub cumulative_lhs: Vec<f64>,
    pub cumulative_rhs: Vec<f64>,
    /// Iterations where the inequality failed.
    pub failures: Vec<usize>,
    pub pass: bool,
}

/// Evaluate the inequality on explicit series: `regrets[i]` and
/// `max_stds[i]` belong to iteration `ts[i]`, which indexes `constants.beta`
/// one-based.
pub fn check_bound_series(
    ts: &[usize],
    regrets: &[f64],
    max_stds: &[f64],
    constants: &BoundConstants,
) -> Result<BoundTrace> {
    constants.validate()?;
    if ts.len() != regrets.len() || ts.len() != max_stds.len() {
        return Err(Error::domain("bound series lengths must match"));
    }
    if regrets
        .iter()
        .chain(max_stds)
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(Error::domain(
            "regrets and posterior spreads must be finite and nonnegative",
        ));
    }
    let mut trace = BoundTrace {
        t: ts.to_vec(),
        lhs: Vec::with_capacity(ts.len()),
        rhs: Vec::with_capacity(ts.len()),
        cumulative_lhs: Vec::with_capacity(ts.len()),
        cumulative_rhs: Vec::with_capacity(ts.len()),
        failures: Vec::new(),
        pass: true,
    };
    let (mut sum_lhs, mut sum_rhs) = (0.0, 0.0);
    for ((&t, &lhs), &max_std) in ts.iter().zip(regrets).zip(max_stds) {
        let beta = *constants
            .beta
            .get(t.checked_sub(1).ok_or_else(|| Error::domain("iterations are one-based"))?)
            .ok_or_else(|| {
                Error::domain(format!(
                    "beta schedule covers {} iterations, run has t = {t}",
                    constants.beta.len()
                ))
            })?;
        let rhs = constants.l_hat * (beta.sqrt() * max_std + constants.xi_hat);
        if lhs > rhs {
            trace.failures.push(t);
            trace.pass = false;
        }
        sum_lhs += lhs;
        sum_rhs += rhs;
        trace.lhs.push(lhs);
        trace.rhs.push(rhs);
        trace.cumulative_lhs.push(sum_lhs);
        trace.cumulative_rhs.push(sum_rhs);
    }
    Ok(trace)
}

/// Evaluate the inequality on a run's recorded instrumentation. The run must
/// have been made with a theory grid so each iteration carries its inference
/// regret and posterior spread.
pub fn check_per_iteration_bound(run: &RunLog, constants: &BoundConstants) -> Result<BoundTrace> {
    if run.theory.is_empty() {
        return Err(Error::state(
            "run carries no bound instrumentation; configure a theory grid",
        ));
    }
    let ts: Vec<usize> = run.theory.iter().map(|r| r.t).collect();
    let regrets: Vec<f64> = run.theory.iter().map(|r| r.inference_regret).collect();
    let max_stds: Vec<f64> = run.theory.iter().map(|r| r.max_std).collect();
    check_bound_series(&ts, &regrets, &max_stds, constants)
}

/// `|ΔHV| / max point displacement` for one front pair, pairing points by
/// index. Returns `None` when nothing moved.
pub fn hv_lipschitz_ratio(
    front: &[Vec<f64>],
    perturbed: &[Vec<f64>],
    reference: &[f64],
) -> Result<Option<f64>> {
    if front.len() != perturbed.len() {
        return Err(Error::domain(
            "lipschitz ratio needs fronts of equal cardinality",
        ));
    }
    let displacement = front
        .iter()
        .zip(perturbed)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0f64, f64::max);
    if displacement == 0.0 {
        return Ok(None);
    }
    let hv_a = hypervolume_exact(front, reference)?;
    let hv_b = hypervolume_exact(perturbed, reference)?;
    Ok(Some((hv_a - hv_b).abs() / displacement))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub l_hat: f64,
    /// Pairs that actually contributed (zero-displacement pairs are skipped).
    pub samples: usize,
}

/// Estimate the Lipschitz constant from an already-computed oracle front:
/// the max ratio over random front subsets perturbed coordinatewise by
/// `Uniform(−magnitude, magnitude)`.
pub fn lipschitz_from_front(
    front: &OracleFront,
    n_perturbations: usize,
    magnitude: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if n_perturbations == 0 {
        return Err(Error::domain("need at least one perturbation"));
    }
    if !magnitude.is_finite() || magnitude <= 0.0 {
        return Err(Error::domain(format!(
            "perturbation magnitude {magnitude} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l_hat = 0.0f64;
    let mut samples = 0usize;
    for k in 0..n_perturbations {
        let mut subset: Vec<Vec<f64>> = front
            .points
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .cloned()
            .collect();
        if subset.is_empty() {
            subset.push(front.points[k % front.points.len()].clone());
        }
        let perturbed: Vec<Vec<f64>> = subset
            .iter()
            .map(|p| {
                p.iter()
                    .map(|v| v + rng.gen_range(-magnitude..=magnitude))
                    .collect()
            })
            .collect();
        if let Some(ratio) = hv_lipschitz_ratio(&subset, &perturbed, &front.reference)? {
            l_hat = l_hat.max(ratio);
            samples += 1;
        }
    }
    Ok(LipschitzEstimate { l_hat, samples })
}

/// Estimate the Lipschitz constant of a problem's hypervolume landscape on a
/// grid-oracle front.
pub fn estimate_hv_lipschitz(
    problem: &dyn Problem,
    grid: &[usize],
    n_perturbations: usize,
    magnitude: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    let front = oracle_pareto_with(problem, grid)?;
    lipschitz_from_front(&front, n_perturbations, magnitude, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiEstimate {
    /// Largest Euclidean gap between the prior mean and the true objectives
    /// over the swept grid.
    pub xi_hat: f64,
    /// Worst-case Monte Carlo standard error of the prior means themselves,
    /// reported separately so the gap can be read with error bars.
    pub mc_error: f64,
}

/// Sweep `‖f(x, s) − prior_mean(x, s)‖₂` over a configuration grid crossed
/// with `fidelity_levels` fidelities. `n_mc` is the Monte Carlo sample count
/// behind the prior means, used only for the error report.
pub fn estimate_xi(
    prior: &dyn CausalPrior,
    problem: &dyn Problem,
    grid: &[usize],
    fidelity_levels: usize,
    n_mc: usize,
) -> Result<XiEstimate> {
    let spec = problem.spec();
    if prior.num_objectives() != spec.m {
        return Err(Error::domain(format!(
            "prior covers {} objectives, problem has {}",
            prior.num_objectives(),
            spec.m
        )));
    }
    if n_mc == 0 {
        return Err(Error::domain("n_mc must be positive"));
    }
    let lattice = grid_points(&spec.bounds, grid)?;
    let levels = spec.fidelities.levels(fidelity_levels);
    let mut xi_hat = 0.0f64;
    let mut worst_spread = 0.0f64;
    for x in &lattice {
        for &s in &levels {
            let (y, _) = problem.evaluate(x, s)?;
            let (mean, spread) = prior.mean_and_scale(x, s)?;
            let gap = y
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            xi_hat = xi_hat.max(gap);
            let norm = spread.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst_spread = worst_spread.max(norm);
        }
    }
    Ok(XiEstimate {
        xi_hat,
        mc_error: worst_spread / (n_mc as f64).sqrt(),
    })
}

/// One probe of the acquisition-consistency inequality: the cost-weighted
/// acquisition value at `(x, s)` against the one-step single-fidelity gain at
/// the same configuration, with the bound's error margin.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionGapSample {
    pub cost_weighted_value: f64,
    pub single_fidelity_gain: f64,
    pub margin: f64,
}

impl AcquisitionGapSample {
    /// Does the inequality hold, allowing `tolerance` for Monte Carlo noise
    /// in the two fantasy averages?
    pub fn holds(&self, tolerance: f64) -> bool {
        self.cost_weighted_value >= self.single_fidelity_gain - self.margin - tolerance
    }
}

/// Probe the inequality `c(x,s)·Â(x,s) ≥ Δ^SF(x) − L̂·(β^{1/2}·max‖σ‖ + ξ̂)`
/// on a fitted model: the left side is the acquisition as configured, the
/// single-fidelity gain is the same machinery pinned to the target fidelity
/// with the causal credit off.
#[allow(clippy::too_many_arguments)]
pub fn acquisition_gap(
    pair: &SurrogatePair,
    prior: &dyn CausalPrior,
    spec: &ProblemSpec,
    reference: &[f64],
    acquisition: &AcquisitionConfig,
    l_hat: f64,
    xi_hat: f64,
    beta_t: f64,
    max_std: f64,
    x: &[f64],
    s: f64,
) -> Result<AcquisitionGapSample> {
    let multi = Chvkg::new(pair, prior, spec, reference.to_vec(), acquisition.clone())?;
    let cost_weighted_value = multi.value(x, s)? * spec.cost.cost(x, s)?;

    let mut target_spec = spec.clone();
    target_spec.fidelities = FidelitySpace::discrete(vec![TARGET_FIDELITY])?;
    let mut target_cfg = acquisition.clone();
    target_cfg.w = 0.0;
    let single = Chvkg::new(pair, prior, &target_spec, reference.to_vec(), target_cfg)?;
    let single_fidelity_gain =
        single.value(x, TARGET_FIDELITY)? * spec.cost.cost(x, TARGET_FIDELITY)?;

    Ok(AcquisitionGapSample {
        cost_weighted_value,
        single_fidelity_gain,
        margin: l_hat * (beta_t.sqrt() * max_std + xi_hat),
    })
}

/// One cell of the bias-robustness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCell {
    pub method: Method,
    pub delta_scale: f64,
    pub median_log_regret: f64,
    pub median_regret: f64,
}

/// Median final regrets of the causal method and the non-causal ablation
/// across cross-fidelity bias magnitudes, plus each method's regret growth
/// from the first (baseline) scale to the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRobustnessReport {
    pub cells: Vec<BiasCell>,
    pub rescue_ratio: f64,
    pub noncausal_ratio: f64,
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Run the causal method and the non-causal ablation on the adversarial
/// problem at each bias scale (first scale is the baseline, usually 0) and
/// summarize the damage the bias does to each.
///
/// Observational rows are forced to the target fidelity: the robustness
/// claim is about a prior whose error is independent of the cross-fidelity
/// bias, and rows drawn through the biased auxiliary fidelities would
/// contaminate the prior itself and measure data quality instead.
pub fn bias_robustness_experiment(
    base: &RunConfig,
    delta_scales: &[f64],
    n_seeds: u64,
) -> Result<BiasRobustnessReport> {
    if delta_scales.len() < 2 {
        return Err(Error::config(
            "bias experiment needs a baseline scale and at least one more",
        ));
    }
    let methods = [Method::Rescue, Method::HvkgNoncausal];
    let mut cells = Vec::new();
    for &delta_scale in delta_scales {
        let mut config = base.clone();
        config.problem = "adversarial".into();
        config.problem_params.delta_scale = delta_scale;
        config.observational.mode = ObservationalMode::TargetOnly;
        let logs = crate::runner::run_method_ablation(&config, &methods, n_seeds)?;
        for (&method, per_method) in methods.iter().zip(&logs) {
            let mut regrets: Vec<f64> = per_method.iter().map(|l| l.final_log_regret).collect();
            let median_log_regret = median(&mut regrets);
            cells.push(BiasCell {
                method,
                delta_scale,
                median_log_regret,
                median_regret: 10f64.powf(median_log_regret),
            });
        }
    }
    let ratio = |method: Method| -> f64 {
        let of = |scale: f64| {
            cells
                .iter()
                .find(|c| c.method == method && c.delta_scale == scale)
                .map(|c| c.median_regret)
                .unwrap_or(f64::NAN)
        };
        of(*delta_scales.last().unwrap()) / of(delta_scales[0])
    };
    Ok(BiasRobustnessReport {
        rescue_ratio: ratio(Method::Rescue),
        noncausal_ratio: ratio(Method::HvkgNoncausal),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub t: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Everything the `theory` CLI subcommand reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub l_hat: f64,
    pub xi_hat: f64,
    pub xi_mc_error: f64,
    pub rho: f64,
    /// Feasible designs on the instrumentation grid (the `|grid|` in β).
    pub grid_points: usize,
    pub per_iteration: Vec<BoundPoint>,
    pub cumulative_lhs: f64,
    pub cumulative_rhs: f64,
    pub failures: Vec<usize>,
    pub pass: bool,
}

const LIPSCHITZ_PERTURBATIONS: usize = 200;

/// Execute a run with bound instrumentation, estimate the constants the same
/// way every report does, and check the inequality. A missing theory grid
/// defaults to 21 points per dimension.
pub fn theory_report(config: &RunConfig) -> Result<TheoryReport> {
    let mut config = config.clone();
    let problem = by_name(&config.problem, &config.problem_params)?;
    let spec = problem.spec();
    if config.theory.grid.is_none() {
        config.theory.grid = Some(vec![21; spec.dims]);
    }
    let theory_grid = config.theory.grid.clone().expect("just set");

    let log = run_problem(problem.as_ref(), &config)?;
    if log.theory.is_empty() {
        return Err(Error::state(
            "run finished without bound instrumentation; raise the budget",
        ));
    }

    // Lipschitz constant from the instrumentation grid's front, perturbing by
    // 5% of the largest objective span.
    let front = oracle_pareto_with(problem.as_ref(), &theory_grid)?;
    let span = front
        .reference
        .iter()
        .enumerate()
        .map(|(j, r)| r - front.points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    let lipschitz = lipschitz_from_front(
        &front,
        LIPSCHITZ_PERTURBATIONS,
        0.05 * span,
        sub_seed(config.seed, "lipschitz", 0),
    )?;

    // Prior error for the prior this run actually used: the causal model is
    // rebuilt from the same seeds, the baselines use the agnostic prior.
    let xi = if config.method == Method::Rescue && config.causal.use_prior {
        let data = observational_sample(
            problem.as_ref(),
            config.observational.n,
            config.observational.noise_std,
            config.observational.mode,
            sub_seed(config.seed, "observational", 0),
        )?;
        let model = CausalModel::discover(
            data,
            spec.causal_nodes(),
            PcConfig {
                alpha: config.causal.alpha,
                max_conditioning: config.causal.max_conditioning,
            },
            config.causal.n_mc,
            sub_seed(config.seed, "causal", 0),
        )?;
        estimate_xi(
            &model,
            problem.as_ref(),
            &theory_grid,
            config.acquisition.fidelity_levels,
            config.causal.n_mc,
        )?
    } else {
        estimate_xi(
            &AgnosticPrior::new(spec.m),
            problem.as_ref(),
            &theory_grid,
            config.acquisition.fidelity_levels,
            config.causal.n_mc,
        )?
    };

    let t_max = log.theory.iter().map(|r| r.t).max().unwrap_or(0);
    let constants = BoundConstants {
        l_hat: lipschitz.l_hat,
        xi_hat: xi.xi_hat,
        beta: beta_schedule(log.theory_grid_feasible, DEFAULT_RHO, t_max)?,
        b_proxy: 1.0,
        c_min: spec
            .cost
            .min_over(&spec.fidelities.levels(config.acquisition.fidelity_levels))?,
    };
    let trace = check_per_iteration_bound(&log, &constants)?;

    Ok(TheoryReport {
        l_hat: constants.l_hat,
        xi_hat: constants.xi_hat,
        xi_mc_error: xi.mc_error,
        rho: DEFAULT_RHO,
        grid_points: log.theory_grid_feasible,
        per_iteration: trace
            .t
            .iter()
            .zip(trace.lhs.iter().zip(&trace.rhs))
            .map(|(&t, (&lhs, &rhs))| BoundPoint { t, lhs, rhs })
            .collect(),
        cumulative_lhs: *trace.cumulative_lhs.last().unwrap(),
        cumulative_rhs: *trace.cumulative_rhs.last().unwrap(),
        failures: trace.failures,
        pass: trace.pass,
    })
}
