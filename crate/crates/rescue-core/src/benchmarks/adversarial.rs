//! Worst-case cross-fidelity bias probe: a clean bi-objective problem whose
//! low fidelities are corrupted by an arbitrarily large, smooth,
//! sign-alternating field. The target fidelity is always exact, which is
//! precisely the situation the bias-robustness claim addresses.

use std::f64::consts::PI;

use crate::cost::CostModel;
use crate::problem::{ObjectiveDirection, Problem, ProblemSpec};
use crate::space::FidelitySpace;
use crate::Result;

/// The bias field: smooth, sign-alternating, with max |g| = 5e-4 on the unit
/// square. The amplitude is calibrated so that the sweep's largest scale
/// (delta_scale = 100) corrupts the low fidelities by roughly a third of the
/// objective range — enough to wreck a method that trusts them, while leaving
/// the corruption learnable rather than saturating every method at the same
/// garbage front.
pub fn bias_field(x: &[f64]) -> f64 {
    5e-4 * (3.0 * PI * x[0]).sin() * (3.0 * PI * x[1]).cos()
}

/// Two quadratic bowls with centers (0.2, 0.2) and (0.8, 0.8); at `s < 1`
/// both objectives are shifted by `delta_scale * g(x)`.
#[derive(Debug)]
pub struct AdversarialBiasProblem {
    spec: ProblemSpec,
    delta_scale: f64,
}

impl AdversarialBiasProblem {
    pub const CENTERS: ([f64; 2], [f64; 2]) = ([0.2, 0.2], [0.8, 0.8]);

    pub fn new(delta_scale: f64) -> Result<Self> {
        if !delta_scale.is_finite() || delta_scale < 0.0 {
            return Err(crate::Error::domain(format!(
                "bias scale {delta_scale} must be finite and nonnegative"
            )));
        }
        let spec = ProblemSpec {
            name: "adversarial".into(),
            dims: 2,
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            fidelities: FidelitySpace::discrete(vec![0.2, 0.5, 1.0])?,
            m: 2,
            q: 0,
            thresholds: vec![],
            directions: vec![ObjectiveDirection::Min, ObjectiveDirection::Min],
            cost: CostModel::Exponential { rate: 4.8 },
            option_names: vec!["x1".into(), "x2".into()],
            objective_names: vec!["near".into(), "far".into()],
            fidelity_name: "s".into(),
        };
        spec.validate()?;
        Ok(AdversarialBiasProblem { spec, delta_scale })
    }

    pub fn delta_scale(&self) -> f64 {
        self.delta_scale
    }
}

impl Problem for AdversarialBiasProblem {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn evaluate_raw(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (a, b) = Self::CENTERS;
        let f1: f64 = x.iter().zip(a).map(|(v, c)| (v - c) * (v - c)).sum();
        let f2: f64 = x.iter().zip(b).map(|(v, c)| (v - c) * (v - c)).sum();
        let bias = if s < 1.0 {
            self.delta_scale * bias_field(x)
        } else {
            0.0
        };
        Ok((vec![f1 + bias, f2 + bias], vec![]))
    }
}
