//! Multi-fidelity causal GP surrogate.
//!
//! The model is a multi-output GP over `(x, s)` whose prior mean is the causal
//! model's interventional estimate and whose kernel couples outputs through an
//! intrinsic-coregionalization matrix plus a term built from the causal
//! spread estimates (see [`kernel`]). Inputs are normalized to the unit box and
//! outputs are standardized internally; all public queries speak raw units.
//!
//! Constraints get their own independent GP with an agnostic prior, bundled
//! with the objective model in [`SurrogatePair`].

mod hyperopt;
pub mod kernel;

pub use kernel::{kernel_eval, KernelSpec};

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::{AgnosticPrior, CausalPrior};
use crate::data::Dataset;
use crate::space::ConfigSpace;
use crate::{Error, Result};

const INITIAL_JITTER: f64 = 1e-6;
const MAX_JITTER: f64 = 1e-2;
const SNAPSHOT_VERSION: u32 = 1;

/// How the kernel hyperparameters are chosen at fit time.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    /// Use the given hyperparameters verbatim.
    Fixed(KernelSpec),
    /// Maximize the log marginal likelihood by seeded multi-start coordinate
    /// ascent: `restarts` starting points, each allowed `evals` likelihood
    /// evaluations.
    Optimized { restarts: usize, evals: usize, seed: u64 },
}

impl Default for KernelChoice {
    fn default() -> Self {
        KernelChoice::Optimized {
            restarts: 8,
            evals: 50,
            seed: 0,
        }
    }
}

/// Fit-time options shared by objective and constraint models.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub kernel: KernelChoice,
    /// Standardize outputs internally (recommended). Disable only when tests
    /// need the raw-scale algebra to be exact under dataset augmentation.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            kernel: KernelChoice::default(),
            standardize: true,
        }
    }
}

/// Posterior mean and covariance across outputs at a single `(x, s)`.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl PosteriorMoments {
    pub fn variance(&self, m: usize) -> f64 {
        self.covariance[m][m]
    }

    pub fn std(&self, m: usize) -> f64 {
        self.variance(m).max(0.0).sqrt()
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    bounds: Vec<(f64, f64)>,
    kernel: KernelSpec,
    standardize: bool,
    output_means: Vec<f64>,
    output_stds: Vec<f64>,
    jitter: f64,
    x: Vec<Vec<f64>>,
    s: Vec<f64>,
    targets: Vec<Vec<f64>>,
}

/// Fitted multi-fidelity causal GP. Immutable once fitted; conditioning on a
/// hypothetical observation produces a new value via [`Self::fantasize`].
pub struct MfcgpPosterior {
    space: ConfigSpace,
    kernel: KernelSpec,
    coregional: Vec<Vec<f64>>,
    prior: Arc<dyn CausalPrior>,
    standardize: bool,
    output_means: Vec<f64>,
    output_stds: Vec<f64>,
    /// Raw training inputs, kept for snapshots and for refitting on restore.
    x_raw: Vec<Vec<f64>>,
    x_norm: Vec<Vec<f64>>,
    s: Vec<f64>,
    /// Raw training targets (objectives or constraint metrics).
    targets: Vec<Vec<f64>>,
    /// Causal spread at each training point, on the standardized scale.
    sigma_hat: Vec<Vec<f64>>,
    residual: DVector<f64>,
    chol_lower: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    m: usize,
}

impl std::fmt::Debug for MfcgpPosterior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfcgpPosterior")
            .field("num_points", &self.x_raw.len())
            .field("num_outputs", &self.m)
            .field("kernel", &self.kernel)
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl MfcgpPosterior {
    /// Fit the objective model: targets are the dataset's objective vectors,
    /// prior mean and spread come from `prior`.
    pub fn fit_objectives(
        dataset: &Dataset,
        space: &ConfigSpace,
        prior: Arc<dyn CausalPrior>,
        options: &FitOptions,
    ) -> Result<Self> {
        if prior.num_objectives() != dataset.num_objectives() {
            return Err(Error::domain(format!(
                "prior covers {} objectives, dataset has {}",
                prior.num_objectives(),
                dataset.num_objectives()
            )));
        }
        let x: Vec<Vec<f64>> = dataset.records().iter().map(|r| r.x.clone()).collect();
        let s: Vec<f64> = dataset.records().iter().map(|r| r.s).collect();
        let targets: Vec<Vec<f64>> = dataset.records().iter().map(|r| r.y.clone()).collect();
        Self::fit_raw(space, x, s, targets, prior, options)
    }

    /// Fit the constraint model: an independent GP over the constraint
    /// metrics with an agnostic prior.
    pub fn fit_constraints(
        dataset: &Dataset,
        space: &ConfigSpace,
        options: &FitOptions,
    ) -> Result<Self> {
        let q = dataset.num_constraints();
        if q == 0 {
            return Err(Error::state("dataset has no constraint metrics to model"));
        }
        let x: Vec<Vec<f64>> = dataset.records().iter().map(|r| r.x.clone()).collect();
        let s: Vec<f64> = dataset.records().iter().map(|r| r.s).collect();
        let targets: Vec<Vec<f64>> = dataset.records().iter().map(|r| r.h.clone()).collect();
        Self::fit_raw(space, x, s, targets, Arc::new(AgnosticPrior::new(q)), options)
    }

    /// Fit on explicit arrays. `targets` is `n x m`; the prior must cover `m`
    /// outputs.
    pub fn fit_raw(
        space: &ConfigSpace,
        x: Vec<Vec<f64>>,
        s: Vec<f64>,
        targets: Vec<Vec<f64>>,
        prior: Arc<dyn CausalPrior>,
        options: &FitOptions,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(Error::state("cannot fit a surrogate on an empty dataset"));
        }
        if s.len() != n || targets.len() != n {
            return Err(Error::domain("inputs, fidelities, and targets must align"));
        }
        let m = prior.num_objectives();
        if targets.iter().any(|row| row.len() != m) {
            return Err(Error::domain(format!("every target row must have {m} entries")));
        }
        for (xi, si) in x.iter().zip(&s) {
            if !space.contains(xi) {
                return Err(Error::domain("training input outside the configuration space"));
            }
            if !(0.0..=1.0).contains(si) {
                return Err(Error::domain(format!("training fidelity {si} outside [0, 1]")));
            }
        }

        let (output_means, output_stds) = if options.standardize && n >= 2 {
            let (_, means, stds) = crate::data::standardize(&targets)?;
            (means, stds)
        } else {
            (vec![0.0; m], vec![1.0; m])
        };

        let x_norm: Vec<Vec<f64>> = x
            .iter()
            .map(|xi| space.normalize(xi))
            .collect::<Result<_>>()?;

        // Prior mean and spread at every training point, moved to the
        // standardized output scale.
        let mut sigma_hat = Vec::with_capacity(n);
        let mut residual = DVector::zeros(n * m);
        for i in 0..n {
            let (mu, sh) = prior.mean_and_scale(&x[i], s[i])?;
            if mu.len() != m || sh.len() != m {
                return Err(Error::domain("prior returned a vector of the wrong width"));
            }
            let mut sh_std = Vec::with_capacity(m);
            for k in 0..m {
                let std = output_stds[k];
                sh_std.push(sh[k] / std);
                residual[i * m + k] = (targets[i][k] - output_means[k]) / std - (mu[k] - output_means[k]) / std;
            }
            sigma_hat.push(sh_std);
        }

        let kernel = match &options.kernel {
            KernelChoice::Fixed(spec) => {
                spec.validate(space.dim(), m)?;
                spec.clone()
            }
            KernelChoice::Optimized {
                restarts,
                evals,
                seed,
            } => hyperopt::optimize(
                space.dim(),
                m,
                &x_norm,
                &s,
                &sigma_hat,
                &residual,
                *restarts,
                *evals,
                *seed,
            )?,
        };

        let coregional = kernel.coregional_matrix();
        let gram = build_gram(&kernel, &coregional, &x_norm, &s, &sigma_hat);
        let (chol_lower, jitter) = factorize(gram, kernel.noise_variance, INITIAL_JITTER)?;
        let alpha = solve_with(&chol_lower, &residual)?;

        Ok(MfcgpPosterior {
            space: space.clone(),
            kernel,
            coregional,
            prior,
            standardize: options.standardize,
            output_means,
            output_stds,
            x_raw: x,
            x_norm,
            s,
            targets,
            sigma_hat,
            residual,
            chol_lower,
            alpha,
            jitter,
            m,
        })
    }

    pub fn num_outputs(&self) -> usize {
        self.m
    }

    pub fn num_points(&self) -> usize {
        self.x_raw.len()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Jitter that was actually needed to factorize the training covariance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Log marginal likelihood of the training data under the fitted kernel
    /// (standardized scale).
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.residual.len();
        let mut log_det_half = 0.0;
        for i in 0..n {
            log_det_half += self.chol_lower[(i, i)].ln();
        }
        -0.5 * self.residual.dot(&self.alpha)
            - log_det_half
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    fn query_context(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::domain(format!("query fidelity {s} outside [0, 1]")));
        }
        let x_norm = self.space.normalize(x)?;
        let (mu, sh) = self.prior.mean_and_scale(x, s)?;
        let sh_std: Vec<f64> = sh
            .iter()
            .zip(&self.output_stds)
            .map(|(v, std)| v / std)
            .collect();
        let mu_std: Vec<f64> = mu
            .iter()
            .zip(self.output_means.iter().zip(&self.output_stds))
            .map(|(v, (mean, std))| (v - mean) / std)
            .collect();
        Ok((x_norm, mu_std, sh_std))
    }

    fn cross_columns(&self, x_norm: &[f64], s: f64, sh_std: &[f64]) -> DMatrix<f64> {
        let n = self.x_raw.len();
        let mut cross = DMatrix::zeros(n * self.m, self.m);
        for i in 0..n {
            let stationary = self.kernel.rbf(x_norm, s, &self.x_norm[i], self.s[i]);
            for mi in 0..self.m {
                for mq in 0..self.m {
                    cross[(i * self.m + mi, mq)] = (stationary
                        + self.kernel.prior_scale * self.sigma_hat[i][mi] * sh_std[mq])
                        * self.coregional[mi][mq];
                }
            }
        }
        cross
    }

    fn self_block(&self, sh_std: &[f64]) -> DMatrix<f64> {
        let mut block = DMatrix::zeros(self.m, self.m);
        for a in 0..self.m {
            for b in 0..self.m {
                block[(a, b)] =
                    (1.0 + self.kernel.prior_scale * sh_std[a] * sh_std[b]) * self.coregional[a][b];
            }
        }
        block
    }

    /// Posterior mean in raw output units. Cheaper than [`Self::posterior`]
    /// because no triangular solve is needed.
    pub fn posterior_mean(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        let (x_norm, mu_std, sh_std) = self.query_context(x, s)?;
        let cross = self.cross_columns(&x_norm, s, &sh_std);
        let mut mean = Vec::with_capacity(self.m);
        for mq in 0..self.m {
            let mut acc = mu_std[mq];
            for a in 0..cross.nrows() {
                acc += cross[(a, mq)] * self.alpha[a];
            }
            mean.push(acc * self.output_stds[mq] + self.output_means[mq]);
        }
        Ok(mean)
    }

    /// Posterior mean and covariance of the latent outputs at `(x, s)`, in
    /// raw units. Observation noise is not included.
    pub fn posterior(&self, x: &[f64], s: f64) -> Result<PosteriorMoments> {
        let (x_norm, mu_std, sh_std) = self.query_context(x, s)?;
        let cross = self.cross_columns(&x_norm, s, &sh_std);
        let v = self
            .chol_lower
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::conditioning("triangular solve failed on posterior query"))?;

        let mut mean = Vec::with_capacity(self.m);
        for mq in 0..self.m {
            let mut acc = mu_std[mq];
            for a in 0..cross.nrows() {
                acc += cross[(a, mq)] * self.alpha[a];
            }
            mean.push(acc * self.output_stds[mq] + self.output_means[mq]);
        }

        let prior_block = self.self_block(&sh_std);
        let mut covariance = vec![vec![0.0; self.m]; self.m];
        for a in 0..self.m {
            for b in 0..self.m {
                let mut reduction = 0.0;
                for r in 0..v.nrows() {
                    reduction += v[(r, a)] * v[(r, b)];
                }
                covariance[a][b] =
                    (prior_block[(a, b)] - reduction) * self.output_stds[a] * self.output_stds[b];
            }
        }
        // Numerical cleanup: symmetrize, clamp variances that dipped barely
        // below zero, flag anything worse.
        for a in 0..self.m {
            for b in (a + 1)..self.m {
                let avg = 0.5 * (covariance[a][b] + covariance[b][a]);
                covariance[a][b] = avg;
                covariance[b][a] = avg;
            }
            if covariance[a][a] < -1e-9 {
                return Err(Error::conditioning(format!(
                    "posterior variance {} is negative beyond tolerance",
                    covariance[a][a]
                )));
            }
            covariance[a][a] = covariance[a][a].max(0.0);
        }
        Ok(PosteriorMoments {
            mean: mean.clone(),
            covariance,
        })
    }

    /// Observation-noise variance for output `m`, in raw units.
    pub fn noise_variance_raw(&self, m: usize) -> f64 {
        self.kernel.noise_variance * self.output_stds[m] * self.output_stds[m]
    }

    /// Draw `count` plausible observations at `(x, s)` and return the model
    /// conditioned on each, sharing hyperparameters with the base fit.
    pub fn fantasize(&self, x: &[f64], s: f64, count: usize, seed: u64) -> Result<Vec<MfcgpPosterior>> {
        if count == 0 {
            return Err(Error::domain("fantasy count must be positive"));
        }
        let moments = self.posterior(x, s)?;
        let mut obs_cov = DMatrix::zeros(self.m, self.m);
        for a in 0..self.m {
            for b in 0..self.m {
                obs_cov[(a, b)] = moments.covariance[a][b];
            }
            obs_cov[(a, a)] += self.noise_variance_raw(a);
        }
        let factor = factorize_small(obs_cov)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let z: Vec<f64> = (0..self.m).map(|_| rng.sample(normal)).collect();
            let mut y = moments.mean.clone();
            for a in 0..self.m {
                for b in 0..=a {
                    y[a] += factor[(a, b)] * z[b];
                }
            }
            out.push(self.condition_on(x, s, &y)?);
        }
        Ok(out)
    }

    /// Condition on one hypothetical observation `(x, s, y)` without
    /// refitting: the Cholesky factor is extended by a rank-`m` block.
    pub fn condition_on(&self, x: &[f64], s: f64, y: &[f64]) -> Result<MfcgpPosterior> {
        if y.len() != self.m {
            return Err(Error::domain(format!("observation must have {} outputs", self.m)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("observation values must be finite"));
        }
        let (x_norm, mu_std, sh_std) = self.query_context(x, s)?;
        let n = self.x_raw.len() * self.m;

        let cross = self.cross_columns(&x_norm, s, &sh_std);
        let mut block = self.self_block(&sh_std);
        for a in 0..self.m {
            block[(a, a)] += self.kernel.noise_variance + self.jitter;
        }

        let z = if n > 0 {
            self.chol_lower
                .solve_lower_triangular(&cross)
                .ok_or_else(|| Error::conditioning("triangular solve failed during conditioning"))?
        } else {
            DMatrix::zeros(0, self.m)
        };
        let schur = &block - z.transpose() * &z;
        let corner = Cholesky::new(schur)
            .ok_or_else(|| Error::conditioning("conditioning update lost positive definiteness"))?
            .l();

        let total = n + self.m;
        let mut lower = DMatrix::zeros(total, total);
        lower.view_mut((0, 0), (n, n)).copy_from(&self.chol_lower);
        lower
            .view_mut((n, 0), (self.m, n))
            .copy_from(&z.transpose());
        lower.view_mut((n, n), (self.m, self.m)).copy_from(&corner);

        let mut residual = DVector::zeros(total);
        residual.rows_mut(0, n).copy_from(&self.residual);
        for k in 0..self.m {
            residual[n + k] = (y[k] - self.output_means[k]) / self.output_stds[k] - mu_std[k];
        }
        let alpha = solve_with(&lower, &residual)?;

        let mut x_raw = self.x_raw.clone();
        x_raw.push(x.to_vec());
        let mut x_norm_all = self.x_norm.clone();
        x_norm_all.push(x_norm);
        let mut s_all = self.s.clone();
        s_all.push(s);
        let mut targets = self.targets.clone();
        targets.push(y.to_vec());
        let mut sigma_hat = self.sigma_hat.clone();
        sigma_hat.push(sh_std);

        Ok(MfcgpPosterior {
            space: self.space.clone(),
            kernel: self.kernel.clone(),
            coregional: self.coregional.clone(),
            prior: Arc::clone(&self.prior),
            standardize: self.standardize,
            output_means: self.output_means.clone(),
            output_stds: self.output_stds.clone(),
            x_raw,
            x_norm: x_norm_all,
            s: s_all,
            targets,
            sigma_hat,
            residual,
            chol_lower: lower,
            alpha,
            jitter: self.jitter,
            m: self.m,
        })
    }

    /// Serialize everything needed to rebuild this model, except the prior,
    /// which the caller must supply again on [`Self::restore`].
    pub fn snapshot(&self) -> Result<String> {
        let snap = Snapshot {
            version: SNAPSHOT_VERSION,
            bounds: self.space.bounds().to_vec(),
            kernel: self.kernel.clone(),
            standardize: self.standardize,
            output_means: self.output_means.clone(),
            output_stds: self.output_stds.clone(),
            jitter: self.jitter,
            x: self.x_raw.clone(),
            s: self.s.clone(),
            targets: self.targets.clone(),
        };
        Ok(serde_json::to_string_pretty(&snap)?)
    }

    /// Rebuild a model from [`Self::snapshot`] output. The prior must be the
    /// one used at fit time for queries to reproduce exactly.
    pub fn restore(json: &str, prior: Arc<dyn CausalPrior>) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(json)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::state(format!(
                "snapshot version {} is not supported (expected {SNAPSHOT_VERSION})",
                snap.version
            )));
        }
        let space = ConfigSpace::new(snap.bounds)?;
        let m = prior.num_objectives();
        if snap.kernel.num_outputs() != m {
            return Err(Error::domain(format!(
                "snapshot stores {} outputs, prior covers {m}",
                snap.kernel.num_outputs()
            )));
        }
        snap.kernel.validate(space.dim(), m)?;
        let n = snap.x.len();
        if n == 0 {
            return Err(Error::state("snapshot holds no training data"));
        }

        let x_norm: Vec<Vec<f64>> = snap
            .x
            .iter()
            .map(|xi| space.normalize(xi))
            .collect::<Result<_>>()?;
        let mut sigma_hat = Vec::with_capacity(n);
        let mut residual = DVector::zeros(n * m);
        for i in 0..n {
            let (mu, sh) = prior.mean_and_scale(&snap.x[i], snap.s[i])?;
            let mut sh_std = Vec::with_capacity(m);
            for k in 0..m {
                let std = snap.output_stds[k];
                sh_std.push(sh[k] / std);
                residual[i * m + k] =
                    (snap.targets[i][k] - snap.output_means[k]) / std - (mu[k] - snap.output_means[k]) / std;
            }
            sigma_hat.push(sh_std);
        }
        let coregional = snap.kernel.coregional_matrix();
        let gram = build_gram(&snap.kernel, &coregional, &x_norm, &snap.s, &sigma_hat);
        // Start escalation at the stored jitter so the factorization matches
        // the original fit bit for bit.
        let (chol_lower, jitter) = factorize(gram, snap.kernel.noise_variance, snap.jitter)?;
        let alpha = solve_with(&chol_lower, &residual)?;

        Ok(MfcgpPosterior {
            space,
            kernel: snap.kernel,
            coregional,
            prior,
            standardize: snap.standardize,
            output_means: snap.output_means,
            output_stds: snap.output_stds,
            x_raw: snap.x,
            x_norm,
            s: snap.s,
            targets: snap.targets,
            sigma_hat,
            residual,
            chol_lower,
            alpha,
            jitter,
            m,
        })
    }
}

/// Objective and constraint surrogates fitted on the same dataset. The two
/// models are independent: constraint observations never move the objective
/// posterior, and vice versa.
#[derive(Debug)]
pub struct SurrogatePair {
    pub objectives: MfcgpPosterior,
    pub constraints: Option<MfcgpPosterior>,
}

impl SurrogatePair {
    pub fn fit(
        dataset: &Dataset,
        space: &ConfigSpace,
        prior: Arc<dyn CausalPrior>,
        objective_options: &FitOptions,
        constraint_options: &FitOptions,
    ) -> Result<Self> {
        let objectives = MfcgpPosterior::fit_objectives(dataset, space, prior, objective_options)?;
        let constraints = if dataset.num_constraints() > 0 {
            Some(MfcgpPosterior::fit_constraints(dataset, space, constraint_options)?)
        } else {
            None
        };
        Ok(SurrogatePair {
            objectives,
            constraints,
        })
    }
}

/// Dense training covariance (without noise) in standardized output space,
/// laid out observation-major: row `i * m + k` is output `k` of observation
/// `i`.
fn build_gram(
    kernel: &KernelSpec,
    coregional: &[Vec<f64>],
    x_norm: &[Vec<f64>],
    s: &[f64],
    sigma_hat: &[Vec<f64>],
) -> DMatrix<f64> {
    let n = x_norm.len();
    let m = kernel.num_outputs();
    let mut gram = DMatrix::zeros(n * m, n * m);
    for i in 0..n {
        for j in i..n {
            let stationary = kernel.rbf(&x_norm[i], s[i], &x_norm[j], s[j]);
            for mi in 0..m {
                for mj in 0..m {
                    let value = (stationary
                        + kernel.prior_scale * sigma_hat[i][mi] * sigma_hat[j][mj])
                        * coregional[mi][mj];
                    gram[(i * m + mi, j * m + mj)] = value;
                    gram[(j * m + mj, i * m + mi)] = value;
                }
            }
        }
    }
    gram
}

/// Cholesky with jitter escalation: starting at `start`, multiply by 10 until
/// the factorization succeeds or the ceiling is passed.
fn factorize(gram: DMatrix<f64>, noise: f64, start: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = gram.nrows();
    let mut jitter = start;
    loop {
        let mut k = gram.clone();
        for i in 0..n {
            k[(i, i)] += noise + jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol.l(), jitter));
        }
        if jitter >= MAX_JITTER {
            return Err(Error::conditioning(format!(
                "training covariance not positive definite even with jitter {jitter}"
            )));
        }
        jitter *= 10.0;
        log::warn!("covariance factorization failed, escalating jitter to {jitter}");
    }
}

/// Small dense Cholesky used for sampling; escalates an absolute ridge.
fn factorize_small(mat: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = mat.nrows();
    let mut ridge = 0.0;
    loop {
        let mut k = mat.clone();
        for i in 0..n {
            k[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok(chol.l());
        }
        if ridge >= 1e-3 {
            return Err(Error::conditioning(
                "observation covariance not positive definite",
            ));
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 10.0 };
    }
}

fn solve_with(lower: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let forward = lower
        .solve_lower_triangular(rhs)
        .ok_or_else(|| Error::conditioning("forward substitution failed"))?;
    lower
        .tr_solve_lower_triangular(&forward)
        .ok_or_else(|| Error::conditioning("back substitution failed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    /// Deterministic nonlinear prior for tests: mean is a known function,
    /// spread grows away from the target fidelity.
    struct TestPrior {
        m: usize,
    }

    impl CausalPrior for TestPrior {
        fn mean_and_scale(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
            let base: f64 = x.iter().map(|v| (2.0 * v).sin()).sum();
            let mean = (0..self.m).map(|k| base + k as f64 * 0.5 * s).collect();
            let scale = (0..self.m)
                .map(|k| 0.3 + 0.2 * (1.0 - s) + 0.05 * k as f64)
                .collect();
            Ok((mean, scale))
        }

        fn num_objectives(&self) -> usize {
            self.m
        }
    }

    fn toy_dataset(n: usize, d: usize, m: usize, seed: u64) -> (Dataset, ConfigSpace) {
        let space = ConfigSpace::unit(d);
        let mut dataset = Dataset::new(d, m, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.1..1.0) };
            let y: Vec<f64> = (0..m)
                .map(|k| {
                    x.iter().map(|v| (3.0 * v).cos()).sum::<f64>() + 0.5 * k as f64 * s
                        + 0.01 * rng.gen_range(-1.0..1.0)
                })
                .collect();
            dataset
                .push(Observation {
                    x,
                    s,
                    y,
                    h: vec![],
                    cost: 1.0,
                })
                .unwrap();
        }
        (dataset, space)
    }

    fn fixed_options(d: usize, m: usize, noise: f64) -> FitOptions {
        let mut spec = KernelSpec::default_for(d, m);
        spec.noise_variance = noise;
        FitOptions {
            kernel: KernelChoice::Fixed(spec),
            standardize: true,
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let space = ConfigSpace::unit(2);
        let dataset = Dataset::new(2, 1, 0);
        let err = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::new(AgnosticPrior::new(1)),
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn interpolates_training_points_with_small_noise() {
        let (dataset, space) = toy_dataset(8, 2, 2, 7);
        let model = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::new(AgnosticPrior::new(2)),
            &fixed_options(2, 2, 1e-8),
        )
        .unwrap();
        for record in dataset.records() {
            let moments = model.posterior(&record.x, record.s).unwrap();
            for k in 0..2 {
                assert!(
                    (moments.mean[k] - record.y[k]).abs() < 1e-4,
                    "mean {} vs observed {}",
                    moments.mean[k],
                    record.y[k]
                );
                assert!(moments.std(k) < 1e-2);
            }
        }
    }

    /// Posterior matches a from-scratch dense solve that inverts the training
    /// covariance directly instead of going through the Cholesky path.
    #[test]
    fn matches_dense_solve() {
        for seed in 0..5 {
            let (dataset, space) = toy_dataset(6, 2, 2, 100 + seed);
            let prior: Arc<dyn CausalPrior> = Arc::new(TestPrior { m: 2 });
            let options = FitOptions {
                kernel: KernelChoice::Fixed(KernelSpec::default_for(2, 2)),
                standardize: false,
            };
            let model =
                MfcgpPosterior::fit_objectives(&dataset, &space, Arc::clone(&prior), &options)
                    .unwrap();

            let spec = KernelSpec::default_for(2, 2);
            let b = spec.coregional_matrix();
            let n = dataset.len();
            let m = 2;
            let recs = dataset.records();
            let prior_at = |x: &[f64], s: f64| prior.mean_and_scale(x, s).unwrap();

            // Dense covariance with noise and the fit's jitter on the diagonal.
            let mut k = DMatrix::zeros(n * m, n * m);
            for i in 0..n {
                for j in 0..n {
                    let (_, shi) = prior_at(&recs[i].x, recs[i].s);
                    let (_, shj) = prior_at(&recs[j].x, recs[j].s);
                    for mi in 0..m {
                        for mj in 0..m {
                            k[(i * m + mi, j * m + mj)] = kernel_eval(
                                &spec, &b, &recs[i].x, recs[i].s, &shi, mi, &recs[j].x, recs[j].s,
                                &shj, mj,
                            );
                        }
                    }
                }
            }
            for a in 0..n * m {
                k[(a, a)] += spec.noise_variance + model.jitter();
            }
            let k_inv = k.try_inverse().unwrap();

            let mut resid = DVector::zeros(n * m);
            for i in 0..n {
                let (mu, _) = prior_at(&recs[i].x, recs[i].s);
                for mi in 0..m {
                    resid[i * m + mi] = recs[i].y[mi] - mu[mi];
                }
            }

            let query = vec![0.31, 0.64];
            let qs = 0.8;
            let (qmu, qsh) = prior_at(&query, qs);
            let mut cross = DMatrix::zeros(n * m, m);
            for i in 0..n {
                let (_, shi) = prior_at(&recs[i].x, recs[i].s);
                for mi in 0..m {
                    for mq in 0..m {
                        cross[(i * m + mi, mq)] = kernel_eval(
                            &spec, &b, &recs[i].x, recs[i].s, &shi, mi, &query, qs, &qsh, mq,
                        );
                    }
                }
            }
            let weights = &k_inv * &resid;
            let moments = model.posterior(&query, qs).unwrap();
            for mq in 0..m {
                let mut want = qmu[mq];
                for a in 0..n * m {
                    want += cross[(a, mq)] * weights[a];
                }
                assert!(
                    (moments.mean[mq] - want).abs() < 1e-8,
                    "seed {seed} output {mq}: {} vs {}",
                    moments.mean[mq],
                    want
                );
            }
            let reduce = cross.transpose() * &k_inv * &cross;
            for a in 0..m {
                for c in 0..m {
                    let self_cov =
                        kernel_eval(&spec, &b, &query, qs, &qsh, a, &query, qs, &qsh, c);
                    let want = self_cov - reduce[(a, c)];
                    assert!(
                        (moments.covariance[a][c] - want).abs() < 1e-8,
                        "covariance [{a}][{c}]"
                    );
                }
            }
        }
    }

    /// Conditioning through the rank-m update must agree with refitting from
    /// scratch on the augmented data.
    #[test]
    fn fantasy_matches_refit() {
        for seed in 0..5 {
            let (dataset, space) = toy_dataset(6, 2, 2, 200 + seed);
            let prior: Arc<dyn CausalPrior> = Arc::new(TestPrior { m: 2 });
            let options = FitOptions {
                kernel: KernelChoice::Fixed(KernelSpec::default_for(2, 2)),
                standardize: false,
            };
            let base =
                MfcgpPosterior::fit_objectives(&dataset, &space, Arc::clone(&prior), &options)
                    .unwrap();

            let x_new = vec![0.45, 0.2];
            let s_new = 0.6;
            let fantasies = base.fantasize(&x_new, s_new, 3, 99).unwrap();
            for fantasy in &fantasies {
                let y_new = fantasy.targets.last().unwrap().clone();
                let mut augmented = dataset.clone();
                augmented
                    .push(Observation {
                        x: x_new.clone(),
                        s: s_new,
                        y: y_new,
                        h: vec![],
                        cost: 1.0,
                    })
                    .unwrap();
                let refit = MfcgpPosterior::fit_objectives(
                    &augmented,
                    &space,
                    Arc::clone(&prior),
                    &options,
                )
                .unwrap();

                let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
                for _ in 0..5 {
                    let q = vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                    let qs = rng.gen_range(0.0..1.0);
                    let a = fantasy.posterior(&q, qs).unwrap();
                    let b = refit.posterior(&q, qs).unwrap();
                    for k in 0..2 {
                        assert!(
                            (a.mean[k] - b.mean[k]).abs() < 1e-8,
                            "mean mismatch {} vs {}",
                            a.mean[k],
                            b.mean[k]
                        );
                        for l in 0..2 {
                            assert!((a.covariance[k][l] - b.covariance[k][l]).abs() < 1e-8);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fantasizing_shrinks_variance() {
        let (dataset, space) = toy_dataset(6, 2, 1, 11);
        let model = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::new(AgnosticPrior::new(1)),
            &fixed_options(2, 1, 1e-4),
        )
        .unwrap();
        let x = vec![0.5, 0.5];
        let before = model.posterior(&x, 1.0).unwrap().variance(0);
        let fantasies = model.fantasize(&x, 1.0, 4, 5).unwrap();
        for fantasy in &fantasies {
            let after = fantasy.posterior(&x, 1.0).unwrap().variance(0);
            assert!(after <= before + 1e-9, "variance grew: {before} -> {after}");
        }
        // Conditioning elsewhere also cannot raise variance here.
        let elsewhere = model.condition_on(&[0.52, 0.48], 1.0, &[0.0]).unwrap();
        let after = elsewhere.posterior(&x, 1.0).unwrap().variance(0);
        assert!(after <= before + 1e-9);
    }

    #[test]
    fn fantasies_are_deterministic_per_seed() {
        let (dataset, space) = toy_dataset(5, 2, 2, 21);
        let model = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::new(AgnosticPrior::new(2)),
            &fixed_options(2, 2, 1e-4),
        )
        .unwrap();
        let a = model.fantasize(&[0.3, 0.7], 0.5, 3, 42).unwrap();
        let b = model.fantasize(&[0.3, 0.7], 0.5, 3, 42).unwrap();
        let c = model.fantasize(&[0.3, 0.7], 0.5, 3, 43).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            assert_eq!(fa.targets.last(), fb.targets.last());
        }
        assert_ne!(a[0].targets.last(), c[0].targets.last());
    }

    #[test]
    fn constraint_model_is_independent_of_objectives() {
        let space = ConfigSpace::unit(2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut with_y = Dataset::new(2, 1, 1);
        let mut with_other_y = Dataset::new(2, 1, 1);
        for _ in 0..6 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s = rng.gen_range(0.2..1.0);
            let h = vec![x[0] + x[1] + 0.01 * rng.gen_range(-1.0..1.0)];
            with_y
                .push(Observation {
                    x: x.clone(),
                    s,
                    y: vec![x[0]],
                    h: h.clone(),
                    cost: 1.0,
                })
                .unwrap();
            with_other_y
                .push(Observation {
                    x,
                    s,
                    y: vec![-5.0],
                    h,
                    cost: 1.0,
                })
                .unwrap();
        }
        let options = fixed_options(2, 1, 1e-4);
        let pair_a = SurrogatePair::fit(
            &with_y,
            &space,
            Arc::new(AgnosticPrior::new(1)),
            &options,
            &options,
        )
        .unwrap();
        let pair_b = SurrogatePair::fit(
            &with_other_y,
            &space,
            Arc::new(AgnosticPrior::new(1)),
            &options,
            &options,
        )
        .unwrap();
        let qa = pair_a
            .constraints
            .as_ref()
            .unwrap()
            .posterior(&[0.4, 0.6], 1.0)
            .unwrap();
        let qb = pair_b
            .constraints
            .as_ref()
            .unwrap()
            .posterior(&[0.4, 0.6], 1.0)
            .unwrap();
        assert_eq!(qa.mean, qb.mean);
        assert_eq!(qa.covariance, qb.covariance);
    }

    #[test]
    fn hyperopt_does_not_hurt_likelihood() {
        let (dataset, space) = toy_dataset(10, 2, 2, 31);
        let prior: Arc<dyn CausalPrior> = Arc::new(AgnosticPrior::new(2));
        let fixed = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::clone(&prior),
            &FitOptions {
                kernel: KernelChoice::Fixed(KernelSpec::default_for(2, 2)),
                standardize: true,
            },
        )
        .unwrap();
        let tuned = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::clone(&prior),
            &FitOptions {
                kernel: KernelChoice::Optimized {
                    restarts: 4,
                    evals: 40,
                    seed: 0,
                },
                standardize: true,
            },
        )
        .unwrap();
        assert!(
            tuned.log_marginal_likelihood() >= fixed.log_marginal_likelihood() - 1e-9,
            "tuned {} vs default {}",
            tuned.log_marginal_likelihood(),
            fixed.log_marginal_likelihood()
        );
    }

    #[test]
    fn causal_prior_guides_extrapolation() {
        // One training point in a corner; query the opposite corner, far
        // beyond the lengthscale. With an informative prior the posterior
        // should track the prior mean there; agnostic reverts toward the data
        // standardization center (zero here).
        let space = ConfigSpace::unit(2);
        let mut dataset = Dataset::new(2, 1, 0);
        for (x0, x1) in [(0.02, 0.03), (0.05, 0.08), (0.04, 0.12)] {
            let x = vec![x0, x1];
            let (mu, _) = TestPrior { m: 1 }.mean_and_scale(&x, 1.0).unwrap();
            dataset
                .push(Observation {
                    x,
                    s: 1.0,
                    y: mu,
                    h: vec![],
                    cost: 1.0,
                })
                .unwrap();
        }
        let informed = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::new(TestPrior { m: 1 }),
            &fixed_options(2, 1, 1e-6),
        )
        .unwrap();
        let query = vec![0.95, 0.95];
        let (want, _) = TestPrior { m: 1 }.mean_and_scale(&query, 1.0).unwrap();
        let got = informed.posterior_mean(&query, 1.0).unwrap();
        assert!(
            (got[0] - want[0]).abs() < 0.3,
            "posterior {} should track prior {}",
            got[0],
            want[0]
        );
    }

    #[test]
    fn rejects_out_of_domain_queries() {
        let (dataset, space) = toy_dataset(4, 2, 1, 3);
        let model = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::new(AgnosticPrior::new(1)),
            &fixed_options(2, 1, 1e-4),
        )
        .unwrap();
        assert!(matches!(
            model.posterior(&[1.5, 0.5], 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            model.posterior(&[0.5, 0.5], 1.2),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            model.posterior(&[0.5], 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn snapshot_roundtrip_reproduces_queries_exactly() {
        let (dataset, space) = toy_dataset(7, 2, 2, 57);
        let prior: Arc<dyn CausalPrior> = Arc::new(TestPrior { m: 2 });
        let model = MfcgpPosterior::fit_objectives(
            &dataset,
            &space,
            Arc::clone(&prior),
            &FitOptions {
                kernel: KernelChoice::Optimized {
                    restarts: 2,
                    evals: 15,
                    seed: 4,
                },
                standardize: true,
            },
        )
        .unwrap();
        let json = model.snapshot().unwrap();
        let restored = MfcgpPosterior::restore(&json, Arc::clone(&prior)).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let q = vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let qs = rng.gen_range(0.0..1.0);
            let a = model.posterior(&q, qs).unwrap();
            let b = restored.posterior(&q, qs).unwrap();
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.covariance, b.covariance);
        }

        let mut bad: serde_json::Value = serde_json::from_str(&json).unwrap();
        bad["version"] = serde_json::json!(99);
        assert!(MfcgpPosterior::restore(&bad.to_string(), prior).is_err());
    }
}
