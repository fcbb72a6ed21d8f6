//! End-to-end optimization runs.
//!
//! [`run`] wires the whole method together: a cost-aware initial design, the
//! causal performance model refreshed on a fixed cycle, surrogate refits, the
//! cost-normalized acquisition, and a per-iteration Pareto extraction audited
//! against a frozen grid oracle. Two ablation baselines share the loop — a
//! non-causal variant (agnostic prior, no causal hypervolume term) and a
//! single-fidelity variant that only ever evaluates at the target — so method
//! comparisons differ in nothing but the knob under study. Everything is
//! seeded through one root, which makes reruns and exports byte-identical.

use std::fs;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{feasibility_probabilities, AcquisitionConfig, Chvkg};
use crate::benchmarks::{
    by_name, observational_sample, oracle_grid, BenchmarkParams, ObservationalMode, OracleGrid,
};
use crate::causal::{AgnosticPrior, CausalModel, CausalPrior, PcConfig};
use crate::data::{Dataset, KahanSum, Observation};
use crate::moea::{nsga2_optimize, Nsga2Config};
use crate::pareto::{area_under_regret, dominates, hypervolume_exact, log_hv_regret, pareto_filter};
use crate::problem::{Problem, ProblemSpec};
use crate::sampling::initial_sample;
use crate::space::{FidelitySpace, TARGET_FIDELITY};
use crate::surrogate::{FitOptions, KernelChoice, KernelSpec, SurrogatePair};
use crate::{Error, Result};

/// Which optimizer drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Causal prior and causal hypervolume credit, all fidelities.
    Rescue,
    /// Same loop with an agnostic prior and no causal credit.
    #[serde(alias = "hvkg")]
    HvkgNoncausal,
    /// Non-causal and restricted to target-fidelity evaluations.
    #[serde(alias = "ehvi")]
    EhviSingleFidelity,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::Rescue,
        Method::HvkgNoncausal,
        Method::EhviSingleFidelity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rescue => "rescue",
            Method::HvkgNoncausal => "hvkg_noncausal",
            Method::EhviSingleFidelity => "ehvi_single_fidelity",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        match name {
            "rescue" => Ok(Method::Rescue),
            "hvkg_noncausal" | "hvkg" => Ok(Method::HvkgNoncausal),
            "ehvi_single_fidelity" | "ehvi" => Ok(Method::EhviSingleFidelity),
            other => Err(Error::config(format!(
                "unknown method {other:?}; expected rescue, hvkg_noncausal, or ehvi_single_fidelity"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::parse(s)
    }
}

/// Observational-data generation for the causal layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationalConfig {
    pub n: usize,
    pub noise_std: f64,
    pub mode: ObservationalMode,
}

impl Default for ObservationalConfig {
    fn default() -> Self {
        ObservationalConfig {
            n: 500,
            noise_std: 0.05,
            mode: ObservationalMode::Uniform,
        }
    }
}

/// Resolution of the ground-truth grid used for regret reporting. `None`
/// picks a per-problem default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
}

/// Optional bound instrumentation: when a grid is given, each iteration also
/// records the inference regret and the largest posterior spread over it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
}

/// Surrogate fit options. Zero restarts means the default kernel is used
/// verbatim, which is both fast and exactly reproducible across datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub standardize: bool,
    pub hyperopt_restarts: usize,
    pub hyperopt_evals: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            standardize: true,
            hyperopt_restarts: 1,
            hyperopt_evals: 24,
        }
    }
}

/// Evolutionary extraction of the model-implied Pareto set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub population: usize,
    pub generations: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            population: 100,
            generations: 50,
        }
    }
}

/// Discovery and interventional-estimate settings for the causal model.
/// `use_prior = false` mutes the causal layer even under the main method,
/// which isolates the prior's contribution in ablations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CausalConfig {
    pub alpha: f64,
    pub max_conditioning: usize,
    pub n_mc: usize,
    pub use_prior: bool,
}

impl Default for CausalConfig {
    fn default() -> Self {
        CausalConfig {
            alpha: 0.05,
            max_conditioning: 3,
            n_mc: 512,
            use_prior: true,
        }
    }
}

fn default_cpm_cycle() -> usize {
    5
}

/// Complete description of a run; the SHA-256 of its canonical JSON names
/// the run in every export. Loads from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: String,
    pub method: Method,
    /// Total evaluation budget, initial design included.
    pub budget: f64,
    /// Budget for the initial design; defaults to 20% of `budget`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_budget: Option<f64>,
    /// Refresh the causal model every this many iterations.
    #[serde(default = "default_cpm_cycle")]
    pub cpm_cycle: usize,
    /// Hard cap on acquisition iterations, mostly for fixed-length traces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub problem_params: BenchmarkParams,
    #[serde(default)]
    pub observational: ObservationalConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Acquisition knobs. The `seed` field is ignored here: the runner
    /// derives one per iteration from the root seed.
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
    #[serde(default)]
    pub causal: CausalConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("bad TOML config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(text: &str) -> Result<RunConfig> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Load by extension: `.toml` or `.json`.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            Some("json") => Self::from_json_str(&text),
            other => Err(Error::config(format!(
                "config {} has unsupported extension {other:?}; use .toml or .json",
                path.display()
            ))),
        }
    }

    /// Initial-design budget with the 20% default applied.
    pub fn init_budget(&self) -> f64 {
        self.init_budget.unwrap_or(0.2 * self.budget)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.budget.is_finite() || self.budget <= 0.0 {
            return Err(Error::config(format!(
                "budget {} must be positive and finite",
                self.budget
            )));
        }
        let init = self.init_budget();
        if !init.is_finite() || init <= 0.0 || init > self.budget {
            return Err(Error::config(format!(
                "initial budget {init} must lie in (0, {}]",
                self.budget
            )));
        }
        // init == budget is allowed: the whole budget goes to the initial
        // design and the optimization loop never starts.
        if self.cpm_cycle == 0 {
            return Err(Error::config("cpm_cycle must be at least 1"));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::config("max_iterations must be at least 1 when set"));
        }
        if self.observational.n == 0 {
            return Err(Error::config("observational sample size must be positive"));
        }
        self.acquisition.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON form; stable across reruns.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }
}

/// One evaluation in the run: `t = 0` rows are the initial design, later `t`
/// are acquisition decisions. The model-quality columns describe the state of
/// knowledge *before* the evaluation was spent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub s: f64,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub cost: f64,
    pub cum_cost: f64,
    pub acq_value: Option<f64>,
    pub inferred_hv: Option<f64>,
    pub log_regret: Option<f64>,
    pub feasible: bool,
}

/// Per-iteration bound instrumentation over the theory grid: the inference
/// regret of the posterior-mean selection and the largest posterior spread,
/// both measured on the model available when iteration `t` was selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub t: usize,
    pub inference_regret: f64,
    pub max_std: f64,
}

/// A recommended configuration audited at the true target fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub feasible: bool,
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config_hash: String,
    pub method: Method,
    pub seed: u64,
    pub problem: String,
    pub dims: usize,
    pub m: usize,
    pub q: usize,
    /// Grid-oracle optimum and reference point all regrets refer to.
    pub hv_star: f64,
    pub reference: Vec<f64>,
    /// Acquisition iterations completed (initial design not counted).
    pub iterations: usize,
    pub total_cost: f64,
    /// Amount by which the final evaluation ran past the budget, if any.
    pub overshoot: f64,
    /// Fraction of evaluated points that violated a constraint.
    pub violation_rate: f64,
    /// Evaluation counts over ten equal fidelity bins on [0, 1].
    pub fidelity_histogram: Vec<usize>,
    pub final_hv: f64,
    pub final_log_regret: f64,
    /// Area under the best-so-far log-regret curve against cumulative cost.
    pub aur: f64,
    pub rows: Vec<IterationRow>,
    pub theory: Vec<TheoryRow>,
    /// Feasible points on the theory grid (zero when instrumentation is off).
    pub theory_grid_feasible: usize,
    pub final_pareto: Vec<ParetoEntry>,
}

/// Stable per-purpose seeds derived from the root: FNV-1a over the label and
/// index. The initial design and observational draw take index 0 and no
/// method-specific input, so different methods at one root seed share them.
pub(crate) fn sub_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut hash = 0xcbf29ce484222325u64 ^ root;
    for byte in label.bytes().chain(index.to_le_bytes()) {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn default_oracle_grid(name: &str, dims: usize) -> Vec<usize> {
    match name {
        "healthcare" => vec![200, 50],
        "park" => vec![8; 4],
        _ => vec![61; dims],
    }
}

fn fit_options(surrogate: &SurrogateConfig, d: usize, outputs: usize, seed: u64) -> FitOptions {
    let kernel = if surrogate.hyperopt_restarts == 0 {
        KernelChoice::Fixed(KernelSpec::default_for(d, outputs))
    } else {
        KernelChoice::Optimized {
            restarts: surrogate.hyperopt_restarts,
            evals: surrogate.hyperopt_evals,
            seed,
        }
    };
    FitOptions {
        kernel,
        standardize: surrogate.standardize,
    }
}

fn dataset_slice(dataset: &Dataset, range: Range<usize>) -> Result<Dataset> {
    let mut out = Dataset::new(dataset.dim(), dataset.num_objectives(), dataset.num_constraints());
    for record in &dataset.records()[range] {
        out.push(record.clone())?;
    }
    Ok(out)
}

fn target_subset(dataset: &Dataset) -> Result<Dataset> {
    let mut out = Dataset::new(dataset.dim(), dataset.num_objectives(), dataset.num_constraints());
    for record in dataset.records() {
        if record.s == TARGET_FIDELITY {
            out.push(record.clone())?;
        }
    }
    Ok(out)
}

fn nondominated_indices(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, p)| j != i && dominates(p, &points[i]))
        })
        .collect()
}

fn theory_row(t: usize, grid: &OracleGrid, pair: &SurrogatePair) -> Result<TheoryRow> {
    let mut means = Vec::with_capacity(grid.points.len());
    let mut max_std = 0.0f64;
    for x in &grid.points {
        let moments = pair.objectives.posterior(x, TARGET_FIDELITY)?;
        let spread = (0..moments.mean.len())
            .map(|k| moments.variance(k).max(0.0))
            .sum::<f64>()
            .sqrt();
        max_std = max_std.max(spread);
        means.push(moments.mean);
    }
    // Select by posterior mean, audit at the true objectives: the gap to the
    // grid optimum is the inference regret the bound speaks about.
    let audited: Vec<Vec<f64>> = nondominated_indices(&means)
        .into_iter()
        .map(|i| grid.objectives[i].clone())
        .collect();
    let hv = hypervolume_exact(&pareto_filter(&audited), &grid.front.reference)?;
    Ok(TheoryRow {
        t,
        inference_regret: (grid.front.hv_star - hv).max(0.0),
        max_std,
    })
}

/// NSGA-II over posterior means at the target fidelity, with constraint
/// handling through the feasibility probability (violation is the total
/// shortfall below even odds). The returned set is audited by evaluating the
/// true objectives; the hypervolume counts only truly feasible entries.
fn extract_front(
    problem: &dyn Problem,
    pair: &SurrogatePair,
    reference: &[f64],
    extraction: &ExtractionConfig,
    seed: u64,
) -> Result<(f64, Vec<ParetoEntry>)> {
    let spec = problem.spec();
    let space = spec.config_space();
    let eval = |x: &[f64]| -> Result<(Vec<f64>, f64)> {
        let mean = pair.objectives.posterior_mean(x, TARGET_FIDELITY)?;
        let violation = if spec.thresholds.is_empty() {
            0.0
        } else {
            feasibility_probabilities(pair.constraints.as_ref(), &spec.thresholds, x)?
                .iter()
                .map(|p| (0.5 - p).max(0.0))
                .sum()
        };
        Ok((mean, violation))
    };
    let result = nsga2_optimize(
        &space,
        eval,
        &Nsga2Config {
            population: extraction.population,
            generations: extraction.generations,
            seed,
            ..Nsga2Config::default()
        },
    )?;
    let recommended = if result.archive.is_empty() {
        &result.population
    } else {
        &result.archive
    };

    let mut entries = Vec::with_capacity(recommended.len());
    let mut feasible_true = Vec::new();
    for individual in recommended {
        let (y, h) = problem.evaluate_target(&individual.x)?;
        let feasible = problem.is_feasible(&h);
        if feasible {
            feasible_true.push(y.clone());
        }
        entries.push(ParetoEntry {
            x: individual.x.clone(),
            y,
            h,
            feasible,
        });
    }
    let hv = if feasible_true.is_empty() {
        0.0
    } else {
        hypervolume_exact(&pareto_filter(&feasible_true), reference)?
    };
    Ok((hv, entries))
}

/// Run a configured benchmark problem.
pub fn run(config: &RunConfig) -> Result<RunLog> {
    config.validate()?;
    let problem = by_name(&config.problem, &config.problem_params)?;
    run_problem(problem.as_ref(), config)
}

/// Run the loop on any problem (the config's `problem`/`problem_params` are
/// ignored in favor of the one given).
pub fn run_problem(problem: &dyn Problem, config: &RunConfig) -> Result<RunLog> {
    config.validate()?;
    let spec = problem.spec();
    spec.validate()?;
    let (d, m, q) = (spec.dims, spec.m, spec.q);
    let seed = config.seed;

    // Ground truth every regret in the log refers to.
    let oracle_res = config
        .oracle
        .grid
        .clone()
        .unwrap_or_else(|| default_oracle_grid(&spec.name, d));
    let oracle = oracle_grid(problem, &oracle_res)?;
    let hv_star = oracle.front.hv_star;
    let reference = oracle.front.reference.clone();

    let theory_grid = match &config.theory.grid {
        Some(grid) => Some(oracle_grid(problem, grid)?),
        None => None,
    };

    // Method wiring: the causal layer, the causal credit weight, and the
    // fidelity ladder are the only things the baselines change.
    let use_causal = config.method == Method::Rescue && config.causal.use_prior;
    let single_fidelity = config.method == Method::EhviSingleFidelity;
    let w = match config.method {
        Method::Rescue => config.acquisition.w,
        _ => 0.0,
    };
    let mut cpm: Option<CausalModel> = if use_causal {
        let data = observational_sample(
            problem,
            config.observational.n,
            config.observational.noise_std,
            config.observational.mode,
            sub_seed(seed, "observational", 0),
        )?;
        Some(CausalModel::discover(
            data,
            spec.causal_nodes(),
            PcConfig {
                alpha: config.causal.alpha,
                max_conditioning: config.causal.max_conditioning,
            },
            config.causal.n_mc,
            sub_seed(seed, "causal", 0),
        )?)
    } else {
        None
    };
    let acq_spec: ProblemSpec = if single_fidelity {
        let mut pinned = spec.clone();
        pinned.fidelities = FidelitySpace::discrete(vec![TARGET_FIDELITY])?;
        pinned
    } else {
        spec.clone()
    };
    let space = spec.config_space();

    // Initial design, shared across methods at the same root seed.
    let mut dataset = initial_sample(problem, config.init_budget(), sub_seed(seed, "init", 0))?;
    let mut cum = KahanSum::default();
    let mut rows: Vec<IterationRow> = Vec::new();
    for record in dataset.records() {
        cum.add(record.cost);
        rows.push(IterationRow {
            t: 0,
            x: record.x.clone(),
            s: record.s,
            y: record.y.clone(),
            h: record.h.clone(),
            cost: record.cost,
            cum_cost: cum.value(),
            acq_value: None,
            inferred_hv: None,
            log_regret: None,
            feasible: problem.is_feasible(&record.h),
        });
    }

    // The single-fidelity baseline models target rows only; if the shared
    // design has none, give it one deterministic target evaluation so the
    // surrogate has something to stand on. It pays full price for it.
    if single_fidelity && !dataset.records().iter().any(|r| r.s == TARGET_FIDELITY) {
        let x0 = dataset.records()[0].x.clone();
        let (y, h) = problem.evaluate(&x0, TARGET_FIDELITY)?;
        let cost = spec.cost.cost(&x0, TARGET_FIDELITY)?;
        let feasible = problem.is_feasible(&h);
        dataset.push(Observation {
            x: x0.clone(),
            s: TARGET_FIDELITY,
            y: y.clone(),
            h: h.clone(),
            cost,
        })?;
        cum.add(cost);
        rows.push(IterationRow {
            t: 0,
            x: x0,
            s: TARGET_FIDELITY,
            y,
            h,
            cost,
            cum_cost: cum.value(),
            acq_value: None,
            inferred_hv: None,
            log_regret: None,
            feasible,
        });
    }

    let max_iterations = config.max_iterations.unwrap_or(usize::MAX);
    let mut theory_rows: Vec<TheoryRow> = Vec::new();
    let mut absorbed = 0usize; // dataset rows already folded into the CPM
    let mut t = 1usize;

    // The initial allocation is committed even if the design came in under
    // it, so a run with init_budget == budget does zero loop iterations.
    let loop_budget_open = config.init_budget() < config.budget;

    while loop_budget_open && cum.value() < config.budget && t <= max_iterations {
        // Fold evaluations the causal model hasn't seen yet into its data.
        if let Some(model) = cpm.as_mut() {
            if (t - 1) % config.cpm_cycle == 0 && dataset.len() > absorbed {
                let fresh = dataset_slice(&dataset, absorbed..dataset.len())?;
                model.update_with(&fresh)?;
                absorbed = dataset.len();
            }
        }
        let prior: Arc<dyn CausalPrior> = match &cpm {
            Some(model) => Arc::new(model.clone()),
            None => Arc::new(AgnosticPrior::new(m)),
        };

        // Refit on everything the method is allowed to see.
        let filtered;
        let view: &Dataset = if single_fidelity {
            filtered = target_subset(&dataset)?;
            &filtered
        } else {
            &dataset
        };
        let pair = SurrogatePair::fit(
            view,
            &space,
            prior.clone(),
            &fit_options(&config.surrogate, d, m, sub_seed(seed, "hyperopt-obj", t as u64)),
            &fit_options(
                &config.surrogate,
                d,
                q.max(1),
                sub_seed(seed, "hyperopt-con", t as u64),
            ),
        )?;

        if let Some(grid) = &theory_grid {
            theory_rows.push(theory_row(t, grid, &pair)?);
        }

        // What would we recommend right now, and how good is it really?
        let (inferred_hv, _) = extract_front(
            problem,
            &pair,
            &reference,
            &config.extraction,
            sub_seed(seed, "extraction", t as u64),
        )?;
        let log_regret = log_hv_regret(hv_star, inferred_hv);

        let mut acq_cfg = config.acquisition.clone();
        acq_cfg.w = w;
        acq_cfg.seed = sub_seed(seed, "acquisition", t as u64);
        let chvkg = Chvkg::new(&pair, prior.as_ref(), &acq_spec, reference.clone(), acq_cfg)?;
        let choice = chvkg.select_next()?;

        let (y, h) = problem.evaluate(&choice.x, choice.s)?;
        let cost = spec.cost.cost(&choice.x, choice.s)?;
        let feasible = problem.is_feasible(&h);
        dataset.push(Observation {
            x: choice.x.clone(),
            s: choice.s,
            y: y.clone(),
            h: h.clone(),
            cost,
        })?;
        cum.add(cost);
        rows.push(IterationRow {
            t,
            x: choice.x,
            s: choice.s,
            y,
            h,
            cost,
            cum_cost: cum.value(),
            acq_value: Some(choice.value),
            inferred_hv: Some(inferred_hv),
            log_regret: Some(log_regret),
            feasible,
        });
        t += 1;
    }

    // Final state of knowledge: fold in stragglers, refit, recommend.
    if let Some(model) = cpm.as_mut() {
        if dataset.len() > absorbed {
            let fresh = dataset_slice(&dataset, absorbed..dataset.len())?;
            model.update_with(&fresh)?;
        }
    }
    let prior: Arc<dyn CausalPrior> = match &cpm {
        Some(model) => Arc::new(model.clone()),
        None => Arc::new(AgnosticPrior::new(m)),
    };
    let filtered;
    let view: &Dataset = if single_fidelity {
        filtered = target_subset(&dataset)?;
        &filtered
    } else {
        &dataset
    };
    let pair = SurrogatePair::fit(
        view,
        &space,
        prior,
        &fit_options(&config.surrogate, d, m, sub_seed(seed, "hyperopt-obj", t as u64)),
        &fit_options(
            &config.surrogate,
            d,
            q.max(1),
            sub_seed(seed, "hyperopt-con", t as u64),
        ),
    )?;
    let (final_hv, final_pareto) = extract_front(
        problem,
        &pair,
        &reference,
        &config.extraction,
        sub_seed(seed, "extraction", t as u64),
    )?;
    let final_log_regret = log_hv_regret(hv_star, final_hv);

    // Area under the best-so-far log-regret curve, one point per iteration.
    let mut costs = Vec::new();
    let mut best_so_far = Vec::new();
    let mut best = f64::INFINITY;
    for row in &rows {
        if let Some(r) = row.log_regret {
            best = best.min(r);
            costs.push(row.cum_cost);
            best_so_far.push(best);
        }
    }
    let aur = if costs.len() >= 2 {
        area_under_regret(&costs, &best_so_far)?
    } else {
        0.0
    };

    let mut fidelity_histogram = vec![0usize; 10];
    for row in &rows {
        let bin = ((row.s * 10.0).floor() as usize).min(9);
        fidelity_histogram[bin] += 1;
    }
    let violations = rows.iter().filter(|r| !r.feasible).count();
    let iterations = rows.iter().filter(|r| r.t > 0).count();
    let total_cost = cum.value();

    Ok(RunLog {
        config_hash: config.hash()?,
        method: config.method,
        seed,
        problem: spec.name.clone(),
        dims: d,
        m,
        q,
        hv_star,
        reference,
        iterations,
        total_cost,
        overshoot: (total_cost - config.budget).max(0.0),
        violation_rate: violations as f64 / rows.len() as f64,
        fidelity_histogram,
        final_hv,
        final_log_regret,
        aur,
        rows,
        theory: theory_rows,
        theory_grid_feasible: theory_grid.map(|g| g.points.len()).unwrap_or(0),
        final_pareto,
    })
}

/// Run every method at seeds `base.seed + 0..n_seeds`; result is indexed
/// `[method][seed]`. Runs at the same seed share their initial design, so
/// cross-method comparisons are paired.
pub fn run_method_ablation(
    base: &RunConfig,
    methods: &[Method],
    n_seeds: u64,
) -> Result<Vec<Vec<RunLog>>> {
    if methods.is_empty() {
        return Err(Error::config("ablation needs at least one method"));
    }
    if n_seeds == 0 {
        return Err(Error::config("ablation needs at least one seed"));
    }
    let mut all = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut per_method = Vec::with_capacity(n_seeds as usize);
        for k in 0..n_seeds {
            let mut config = base.clone();
            config.method = method;
            config.seed = base.seed.wrapping_add(k);
            per_method.push(run(&config)?);
        }
        all.push(per_method);
    }
    Ok(all)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Write the run artifacts into `dir`:
///
/// - `run.csv` — one row per evaluation (schema below),
/// - `pareto.csv` — the audited final recommendation set,
/// - `summary.json` — scalar outcomes,
/// - `runlog.json` — the full log, loadable back into [`RunLog`],
/// - `theory.csv` — bound instrumentation, when enabled,
/// - `plotdata/regret_vs_cost.csv` — the curve most plots want.
///
/// `run.csv` columns: `t, s, cost, cum_cost, acq_value, inferred_hv,
/// log_regret, feasible`, then `x0..`, `y0..`, `h0..`. Optional cells are
/// empty for initial-design rows. Exports contain no timestamps and repeat
/// byte-for-byte.
pub fn export_results(log: &RunLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("plotdata"))?;

    let mut writer = csv::Writer::from_path(dir.join("run.csv"))?;
    let mut header: Vec<String> = ["t", "s", "cost", "cum_cost", "acq_value", "inferred_hv", "log_regret", "feasible"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..log.dims).map(|k| format!("x{k}")));
    header.extend((0..log.m).map(|k| format!("y{k}")));
    header.extend((0..log.q).map(|k| format!("h{k}")));
    writer.write_record(&header)?;
    for row in &log.rows {
        let mut record = vec![
            row.t.to_string(),
            fmt_f64(row.s),
            fmt_f64(row.cost),
            fmt_f64(row.cum_cost),
            fmt_opt(row.acq_value),
            fmt_opt(row.inferred_hv),
            fmt_opt(row.log_regret),
            (row.feasible as u8).to_string(),
        ];
        record.extend(row.x.iter().copied().map(fmt_f64));
        record.extend(row.y.iter().copied().map(fmt_f64));
        record.extend(row.h.iter().copied().map(fmt_f64));
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let mut writer = csv::Writer::from_path(dir.join("pareto.csv"))?;
    let mut header: Vec<String> = Vec::new();
    header.extend((0..log.dims).map(|k| format!("x{k}")));
    header.extend((0..log.m).map(|k| format!("y{k}")));
    header.extend((0..log.q).map(|k| format!("h{k}")));
    header.push("feasible".to_string());
    writer.write_record(&header)?;
    for entry in &log.final_pareto {
        let mut record: Vec<String> = Vec::new();
        record.extend(entry.x.iter().copied().map(fmt_f64));
        record.extend(entry.y.iter().copied().map(fmt_f64));
        record.extend(entry.h.iter().copied().map(fmt_f64));
        record.push((entry.feasible as u8).to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;

    if !log.theory.is_empty() {
        let mut writer = csv::Writer::from_path(dir.join("theory.csv"))?;
        writer.write_record(["t", "inference_regret", "max_std"])?;
        for row in &log.theory {
            writer.write_record(&[
                row.t.to_string(),
                fmt_f64(row.inference_regret),
                fmt_f64(row.max_std),
            ])?;
        }
        writer.flush()?;
    }

    let mut writer = csv::Writer::from_path(dir.join("plotdata").join("regret_vs_cost.csv"))?;
    writer.write_record(["cum_cost", "log_regret", "best_log_regret"])?;
    let mut best = f64::INFINITY;
    for row in &log.rows {
        if let Some(r) = row.log_regret {
            best = best.min(r);
            writer.write_record(&[fmt_f64(row.cum_cost), fmt_f64(r), fmt_f64(best)])?;
        }
    }
    writer.flush()?;

    #[derive(Serialize)]
    struct Summary<'a> {
        config_hash: &'a str,
        method: Method,
        seed: u64,
        problem: &'a str,
        dims: usize,
        m: usize,
        q: usize,
        hv_star: f64,
        reference: &'a [f64],
        iterations: usize,
        total_cost: f64,
        overshoot: f64,
        violation_rate: f64,
        fidelity_histogram: &'a [usize],
        final_hv: f64,
        final_log_regret: f64,
        aur: f64,
        theory_iterations: usize,
        theory_grid_feasible: usize,
    }
    let summary = Summary {
        config_hash: &log.config_hash,
        method: log.method,
        seed: log.seed,
        problem: &log.problem,
        dims: log.dims,
        m: log.m,
        q: log.q,
        hv_star: log.hv_star,
        reference: &log.reference,
        iterations: log.iterations,
        total_cost: log.total_cost,
        overshoot: log.overshoot,
        violation_rate: log.violation_rate,
        fidelity_histogram: &log.fidelity_histogram,
        final_hv: log.final_hv,
        final_log_regret: log.final_log_regret,
        aur: log.aur,
        theory_iterations: log.theory.len(),
        theory_grid_feasible: log.theory_grid_feasible,
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    fs::write(
        dir.join("runlog.json"),
        serde_json::to_string_pretty(log)? + "\n",
    )?;
    Ok(())
}
