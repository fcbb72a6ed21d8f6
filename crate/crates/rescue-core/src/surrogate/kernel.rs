//! Multi-output kernel: ARD-RBF over inputs and fidelity, a causal-uncertainty
//! term, and an intrinsic-coregionalization mixing matrix.
//!
//! For outputs m, m' at points (x, s), (x', s'):
//!
//! ```text
//! k = (rbf(x, x') * rbf(s, s') + prior_scale * sh_m(x, s) * sh_m'(x', s')) * B[m, m']
//! ```
//!
//! where `sh` is the causal prior's spread estimate and `B = L L^T + diag(exp(a))`
//! with rank(L) = min(M, 2).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 1e2);
pub const NOISE_BOUNDS: (f64, f64) = (1e-8, 1.0);
pub const PRIOR_SCALE_BOUNDS: (f64, f64) = (0.0, 10.0);

/// Kernel hyperparameters for an `m`-output GP over `d` input dimensions
/// (normalized to the unit box) plus one fidelity dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// Per-dimension RBF lengthscales on normalized inputs.
    pub input_lengthscales: Vec<f64>,
    /// RBF lengthscale along the fidelity axis.
    pub fidelity_lengthscale: f64,
    /// Weight of the causal-uncertainty term.
    pub prior_scale: f64,
    /// Low-rank coregionalization factor, `m x min(m, 2)`, row-major.
    pub coregional_factor: Vec<Vec<f64>>,
    /// Log of the per-output diagonal added to `L L^T`.
    pub coregional_log_diag: Vec<f64>,
    /// Observation noise variance on the standardized output scale.
    pub noise_variance: f64,
}

impl KernelSpec {
    /// Coregionalization rank used throughout: `min(m, 2)`.
    pub fn rank_for(m: usize) -> usize {
        m.min(2)
    }

    /// Reasonable starting point for hyperparameter search.
    pub fn default_for(d: usize, m: usize) -> Self {
        let rank = Self::rank_for(m);
        let mut factor = vec![vec![0.0; rank]; m];
        for row in factor.iter_mut() {
            row[0] = 0.7;
        }
        KernelSpec {
            input_lengthscales: vec![0.3; d],
            fidelity_lengthscale: 0.5,
            prior_scale: 1.0,
            coregional_factor: factor,
            coregional_log_diag: vec![(0.25f64).ln(); m],
            noise_variance: 1e-4,
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.coregional_log_diag.len()
    }

    pub fn num_input_dims(&self) -> usize {
        self.input_lengthscales.len()
    }

    pub fn validate(&self, d: usize, m: usize) -> Result<()> {
        if self.input_lengthscales.len() != d {
            return Err(Error::domain(format!(
                "{} lengthscales for {} input dims",
                self.input_lengthscales.len(),
                d
            )));
        }
        if self.coregional_log_diag.len() != m || self.coregional_factor.len() != m {
            return Err(Error::domain(format!(
                "coregionalization sized for {} outputs, model has {}",
                self.coregional_log_diag.len(),
                m
            )));
        }
        let rank = Self::rank_for(m);
        if self.coregional_factor.iter().any(|row| row.len() != rank) {
            return Err(Error::domain(format!("coregional factor must be {m} x {rank}")));
        }
        let (ls_lo, ls_hi) = LENGTHSCALE_BOUNDS;
        for ls in self
            .input_lengthscales
            .iter()
            .chain(std::iter::once(&self.fidelity_lengthscale))
        {
            if !ls.is_finite() || *ls < ls_lo || *ls > ls_hi {
                return Err(Error::domain(format!(
                    "lengthscale {ls} outside [{ls_lo}, {ls_hi}]"
                )));
            }
        }
        let (n_lo, n_hi) = NOISE_BOUNDS;
        if !self.noise_variance.is_finite() || self.noise_variance < n_lo || self.noise_variance > n_hi {
            return Err(Error::domain(format!(
                "noise variance {} outside [{n_lo}, {n_hi}]",
                self.noise_variance
            )));
        }
        let (p_lo, p_hi) = PRIOR_SCALE_BOUNDS;
        if !self.prior_scale.is_finite() || self.prior_scale < p_lo || self.prior_scale > p_hi {
            return Err(Error::domain(format!(
                "prior scale {} outside [{p_lo}, {p_hi}]",
                self.prior_scale
            )));
        }
        let finite = self
            .coregional_factor
            .iter()
            .flatten()
            .chain(&self.coregional_log_diag)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("coregionalization parameters must be finite"));
        }
        Ok(())
    }

    /// Mixing matrix `B = L L^T + diag(exp(a))`, always positive definite.
    pub fn coregional_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.num_outputs();
        let rank = Self::rank_for(m);
        let mut b = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for r in 0..rank {
                    acc += self.coregional_factor[i][r] * self.coregional_factor[j][r];
                }
                b[i][j] = acc;
            }
            b[i][i] += self.coregional_log_diag[i].exp();
        }
        b
    }

    /// Stationary part: product of the input and fidelity RBFs.
    pub fn rbf(&self, x: &[f64], s: f64, x2: &[f64], s2: f64) -> f64 {
        let mut dist = 0.0;
        for ((a, b), ls) in x.iter().zip(x2).zip(&self.input_lengthscales) {
            let t = (a - b) / ls;
            dist += t * t;
        }
        let tf = (s - s2) / self.fidelity_lengthscale;
        dist += tf * tf;
        (-0.5 * dist).exp()
    }
}

/// Full kernel between output `m` at `(x, s)` and output `m2` at `(x2, s2)`.
///
/// `sh` / `sh2` are the causal spread vectors at the two points.
#[allow(clippy::too_many_arguments)]
pub fn kernel_eval(
    spec: &KernelSpec,
    b: &[Vec<f64>],
    x: &[f64],
    s: f64,
    sh: &[f64],
    m: usize,
    x2: &[f64],
    s2: f64,
    sh2: &[f64],
    m2: usize,
) -> f64 {
    let stationary = spec.rbf(x, s, x2, s2);
    (stationary + spec.prior_scale * sh[m] * sh2[m2]) * b[m][m2]
}
