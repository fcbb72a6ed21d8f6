//! Cost-normalized causal hypervolume knowledge gradient.
//!
//! The acquisition scores a candidate `(x, s)` by the expected one-step gain
//! in combined hypervolume — posterior-mean hypervolume plus a weighted
//! causal-interventional term — per unit evaluation cost. The expectation is
//! a Monte Carlo average over fantasy posteriors; the inner maximization runs
//! over one shared quasi-random candidate set at the target fidelity, which
//! keeps the fantasy estimates on common random numbers. Candidates that the
//! constraint posterior deems unlikely to be feasible are filtered before
//! scoring.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::causal::CausalPrior;
use crate::pareto::{hypervolume_exact, pareto_filter};
use crate::problem::{ConstraintSpec, ProblemSpec};
use crate::sampling::{quasi_random_candidates, QrKind};
use crate::space::{ConfigSpace, TARGET_FIDELITY};
use crate::surrogate::{MfcgpPosterior, SurrogatePair};
use crate::{Error, Result};

/// Posterior spread below this counts as deterministic when converting
/// constraint slack into a feasibility probability.
const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Weight of the causal-interventional hypervolume term, in [0, 1].
    pub w: f64,
    /// Fantasy draws per candidate.
    pub n_fantasies: usize,
    /// Shared inner candidate-set size (target-fidelity configurations).
    pub n_inner: usize,
    /// Outer quasi-random configurations scored by `select_next`.
    pub n_outer: usize,
    /// Fidelity grid size for continuous fidelity spaces; discrete spaces
    /// always use every level.
    pub fidelity_levels: usize,
    /// A candidate is considered feasible when every constraint's posterior
    /// feasibility probability exceeds this.
    pub feasibility_threshold: f64,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            w: 0.5,
            n_fantasies: 8,
            n_inner: 256,
            n_outer: 64,
            fidelity_levels: 8,
            feasibility_threshold: 0.5,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.w.is_finite() || !(0.0..=1.0).contains(&self.w) {
            return Err(Error::config(format!(
                "causal hypervolume weight must be in [0, 1], got {}",
                self.w
            )));
        }
        if self.n_fantasies == 0 || self.n_inner == 0 || self.n_outer == 0 {
            return Err(Error::config(
                "fantasy, inner, and outer candidate counts must all be >= 1",
            ));
        }
        if self.fidelity_levels == 0 {
            return Err(Error::config("fidelity grid needs at least one level"));
        }
        if !self.feasibility_threshold.is_finite()
            || !(0.0..1.0).contains(&self.feasibility_threshold)
        {
            return Err(Error::config(format!(
                "feasibility threshold must be in [0, 1), got {}",
                self.feasibility_threshold
            )));
        }
        Ok(())
    }
}

/// One scored candidate. `value` is `None` when the candidate was filtered
/// out on feasibility and never scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub x: Vec<f64>,
    pub s: f64,
    pub value: Option<f64>,
    pub cost: f64,
    /// Minimum posterior feasibility probability across constraints
    /// (1 when there are none).
    pub feasibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionResult {
    pub x: Vec<f64>,
    pub s: f64,
    pub value: f64,
    /// Set when no candidate cleared the feasibility threshold and selection
    /// fell back to the most-feasible configuration.
    pub fallback: bool,
    pub table: Vec<CandidateScore>,
}

/// Per-constraint posterior feasibility probabilities at the target fidelity:
/// `Phi(slack / sigma)` with the slack signed so that positive means
/// satisfied. Empty when the problem has no constraints.
pub fn feasibility_probabilities(
    constraints: Option<&MfcgpPosterior>,
    thresholds: &[ConstraintSpec],
    x: &[f64],
) -> Result<Vec<f64>> {
    if thresholds.is_empty() {
        return Ok(Vec::new());
    }
    let model = constraints.ok_or_else(|| {
        Error::state("problem declares constraints but no constraint model was fitted")
    })?;
    if model.num_outputs() != thresholds.len() {
        return Err(Error::state(format!(
            "constraint model has {} outputs for {} thresholds",
            model.num_outputs(),
            thresholds.len()
        )));
    }
    let moments = model.posterior(x, TARGET_FIDELITY)?;
    Ok(thresholds
        .iter()
        .enumerate()
        .map(|(q, c)| gaussian_feasibility(c.slack(moments.mean[q]), moments.std(q)))
        .collect())
}

fn gaussian_feasibility(slack: f64, sigma: f64) -> f64 {
    if sigma <= DEGENERATE_STD {
        return match slack.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
    }
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    standard.cdf(slack / sigma)
}

/// Candidate-level aggregate: the most binding constraint decides.
pub fn min_feasibility(probabilities: &[f64]) -> f64 {
    probabilities.iter().fold(1.0, |acc, p| acc.min(*p))
}

/// Combined hypervolume of a candidate set: hypervolume of the
/// Pareto-filtered posterior means at the target fidelity, plus `w` times the
/// hypervolume of the Pareto-filtered interventional means.
pub fn combined_hv(
    model: &MfcgpPosterior,
    prior: &dyn CausalPrior,
    candidates: &[Vec<f64>],
    w: f64,
    reference: &[f64],
) -> Result<f64> {
    let hv_ci = causal_hv(prior, candidates, reference)?;
    let hv_gp = posterior_mean_hv(model, candidates, reference)?;
    Ok(hv_gp + w * hv_ci)
}

fn posterior_mean_hv(
    model: &MfcgpPosterior,
    candidates: &[Vec<f64>],
    reference: &[f64],
) -> Result<f64> {
    let means = candidates
        .iter()
        .map(|x| model.posterior_mean(x, TARGET_FIDELITY))
        .collect::<Result<Vec<_>>>()?;
    hypervolume_exact(&pareto_filter(&means), reference)
}

fn causal_hv(prior: &dyn CausalPrior, candidates: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    let means = candidates
        .iter()
        .map(|x| prior.mean_and_scale(x, TARGET_FIDELITY).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    hypervolume_exact(&pareto_filter(&means), reference)
}

/// The acquisition engine: everything that is constant across candidates —
/// the shared inner set, its feasibility filter, the causal hypervolume term,
/// and the current-model baseline — is computed once at construction.
pub struct Chvkg<'a> {
    model: &'a SurrogatePair,
    spec: &'a ProblemSpec,
    space: ConfigSpace,
    cfg: AcquisitionConfig,
    reference: Vec<f64>,
    /// Inner candidates that passed the feasibility filter (all of them, with
    /// a warning, when none passed).
    inner: Vec<Vec<f64>>,
    hv_ci: f64,
    current: f64,
}

impl<'a> Chvkg<'a> {
    pub fn new(
        model: &'a SurrogatePair,
        prior: &'a dyn CausalPrior,
        spec: &'a ProblemSpec,
        reference: Vec<f64>,
        cfg: AcquisitionConfig,
    ) -> Result<Self> {
        let space = spec.config_space();
        let inner = quasi_random_candidates(
            &space,
            cfg.n_inner,
            QrKind::Sobol,
            stream_seed(cfg.seed, "inner-candidates"),
        )?;
        Self::from_parts(model, prior, spec, reference, cfg, inner)
    }

    /// Construction from an explicit inner candidate list; `new` generates it
    /// quasi-randomly.
    fn from_parts(
        model: &'a SurrogatePair,
        prior: &'a dyn CausalPrior,
        spec: &'a ProblemSpec,
        reference: Vec<f64>,
        cfg: AcquisitionConfig,
        inner: Vec<Vec<f64>>,
    ) -> Result<Self> {
        cfg.validate()?;
        let space = spec.config_space();
        if reference.len() != model.objectives.num_outputs() {
            return Err(Error::config(format!(
                "reference point has {} coordinates for {} objectives",
                reference.len(),
                model.objectives.num_outputs()
            )));
        }
        if inner.is_empty() {
            return Err(Error::config("inner candidate set is empty"));
        }

        let mut feasible = Vec::with_capacity(inner.len());
        for x in &inner {
            let probs =
                feasibility_probabilities(self_constraints(model), &spec.thresholds, x)?;
            if min_feasibility(&probs) > cfg.feasibility_threshold {
                feasible.push(x.clone());
            }
        }
        if feasible.is_empty() {
            log::warn!(
                "no inner candidate clears feasibility {}; baseline uses the unconstrained set",
                cfg.feasibility_threshold
            );
            feasible = inner;
        }

        let hv_ci = causal_hv(prior, &feasible, &reference)?;
        let hv_gp = posterior_mean_hv(&model.objectives, &feasible, &reference)?;
        let current = hv_gp + cfg.w * hv_ci;

        Ok(Chvkg {
            model,
            spec,
            space,
            cfg,
            reference,
            inner: feasible,
            hv_ci,
            current,
        })
    }

    /// The baseline subtracted from every fantasy gain: combined hypervolume
    /// the current model already claims over the inner set.
    pub fn current_value(&self) -> f64 {
        self.current
    }

    /// Causal hypervolume term, constant across fantasies and candidates.
    pub fn hv_ci(&self) -> f64 {
        self.hv_ci
    }

    pub fn inner_candidates(&self) -> &[Vec<f64>] {
        &self.inner
    }

    /// The acquisition value: expected combined-hypervolume gain from one
    /// evaluation at `(x, s)`, divided by its cost. The fantasy seed is a
    /// pure function of the root seed and the candidate, so values do not
    /// depend on enumeration order.
    pub fn value(&self, x: &[f64], s: f64) -> Result<f64> {
        if !self.space.contains(x) {
            return Err(Error::domain(format!(
                "candidate {x:?} outside the configuration space"
            )));
        }
        if !self.spec.fidelities.contains(s) {
            return Err(Error::domain(format!(
                "candidate fidelity {s} outside the fidelity space"
            )));
        }
        let cost = self.spec.cost.cost(x, s)?;
        let seed = candidate_seed(self.cfg.seed, x, s);
        let fantasies = self
            .model
            .objectives
            .fantasize(x, s, self.cfg.n_fantasies, seed)?;
        let mut total = 0.0;
        for fantasy in &fantasies {
            total += posterior_mean_hv(&fantasy, &self.inner, &self.reference)?
                + self.cfg.w * self.hv_ci;
        }
        let gain = total / self.cfg.n_fantasies as f64 - self.current;
        let value = gain / cost;
        if !value.is_finite() {
            return Err(Error::conditioning(format!(
                "non-finite acquisition value at ({x:?}, {s})"
            )));
        }
        Ok(value)
    }

    /// Score a quasi-random outer set crossed with the fidelity grid and pick
    /// the best candidate.
    pub fn select_next(&self) -> Result<AcquisitionResult> {
        let configs = quasi_random_candidates(
            &self.space,
            self.cfg.n_outer,
            QrKind::Sobol,
            stream_seed(self.cfg.seed, "outer-candidates"),
        )?;
        self.select_among(&configs)
    }

    /// Selection over explicit configurations: every configuration is
    /// crossed with the fidelity grid, feasible ones are scored, and the
    /// winner is the highest value with ties broken by lower cost, then
    /// lexicographic configuration, then lower fidelity.
    pub fn select_among(&self, configs: &[Vec<f64>]) -> Result<AcquisitionResult> {
        if configs.is_empty() {
            return Err(Error::config("selection needs at least one candidate"));
        }
        let grid = self.spec.fidelities.levels(self.cfg.fidelity_levels);
        let mut table = Vec::with_capacity(configs.len() * grid.len());
        for x in configs {
            let probs =
                feasibility_probabilities(self_constraints(self.model), &self.spec.thresholds, x)?;
            let feasibility = min_feasibility(&probs);
            let feasible = feasibility > self.cfg.feasibility_threshold;
            for &s in &grid {
                let cost = self.spec.cost.cost(x, s)?;
                let value = if feasible { Some(self.value(x, s)?) } else { None };
                table.push(CandidateScore {
                    x: x.clone(),
                    s,
                    value,
                    cost,
                    feasibility,
                });
            }
        }

        let mut fallback = false;
        if table.iter().all(|row| row.value.is_none()) {
            // Nothing cleared the threshold: score the most-feasible
            // configuration anyway and flag the result.
            fallback = true;
            log::warn!(
                "no candidate clears feasibility {}; falling back to the most feasible",
                self.cfg.feasibility_threshold
            );
            let best_x = table
                .iter()
                .map(|row| (row.feasibility, &row.x))
                .max_by(|a, b| {
                    a.0.total_cmp(&b.0)
                        .then_with(|| lex_cmp(b.1, a.1))
                })
                .map(|(_, x)| x.clone())
                .expect("nonempty table");
            for row in table.iter_mut().filter(|row| row.x == best_x) {
                row.value = Some(self.value(&row.x, row.s)?);
            }
        }

        let best = table
            .iter()
            .filter(|row| row.value.is_some())
            .max_by(|a, b| rank_candidates(b, a))
            .expect("at least one scored row");
        Ok(AcquisitionResult {
            x: best.x.clone(),
            s: best.s,
            value: best.value.expect("scored row"),
            fallback,
            table,
        })
    }
}

fn self_constraints(model: &SurrogatePair) -> Option<&MfcgpPosterior> {
    model.constraints.as_ref()
}

/// Candidate preference order: higher value, then lower cost, then
/// lexicographically smaller configuration, then lower fidelity. Returns
/// `Less` when `a` is preferred.
fn rank_candidates(a: &CandidateScore, b: &CandidateScore) -> std::cmp::Ordering {
    let av = a.value.expect("ranked rows are scored");
    let bv = b.value.expect("ranked rows are scored");
    bv.total_cmp(&av)
        .then_with(|| a.cost.total_cmp(&b.cost))
        .then_with(|| lex_cmp(&a.x, &b.x))
        .then_with(|| a.s.total_cmp(&b.s))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (ai, bi) in a.iter().zip(b) {
        let ord = ai.total_cmp(bi);
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    a.len().cmp(&b.len())
}

/// Named sub-stream of the root seed (FNV-1a over the label).
fn stream_seed(root: u64, label: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64 ^ root;
    for byte in label.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Fantasy seed for a candidate: depends only on the root seed and the
/// query quantized to a 1e-9 grid, never on enumeration order.
fn candidate_seed(root: u64, x: &[f64], s: f64) -> u64 {
    let mut hash = stream_seed(root, "fantasy");
    for v in x.iter().chain(std::iter::once(&s)) {
        let q = (v / 1e-9).round() as i64;
        for byte in q.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}
