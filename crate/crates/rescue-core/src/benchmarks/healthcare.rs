//! Clinical decision benchmark: choose BMI target and aspirin use to minimize
//! statin burden and PSA while keeping cancer risk below a threshold. The
//! fidelity knob scales the linear indices inside each response, so low
//! fidelities flatten the responses and `s = 1` recovers the original
//! single-fidelity functions.

use crate::cost::CostModel;
use crate::problem::{
    ConstraintDirection, ConstraintSpec, ObjectiveDirection, Problem, ProblemSpec,
};
use crate::space::FidelitySpace;
use crate::Result;

pub const AGE: f64 = 65.0;

/// Default clinical threshold on cancer risk; 0.30 ships as a stricter
/// preset because both appear in the literature this model follows.
pub const CANCER_THRESHOLD_DEFAULT: f64 = 0.35;
pub const CANCER_THRESHOLD_STRICT: f64 = 0.30;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Closed-form responses `(statin, psa, cancer)` at fidelity `s`.
///
/// Statin feeds cancer risk, and both feed PSA.
pub fn healthcare_eval(bmi: f64, aspirin: f64, s: f64) -> (f64, f64, f64) {
    let statin = sigmoid(s * (-13.0 + 0.1 * AGE + 0.2 * bmi));
    let cancer = sigmoid(s * (2.2 - 0.05 * AGE + 0.01 * bmi - 0.04 * statin + 0.2 * aspirin));
    let psa = (s + 6.8) * (0.04 * AGE - 0.15 * bmi + 0.6 * statin + 0.55 * aspirin + cancer);
    (statin, psa, cancer)
}

#[derive(Debug)]
pub struct HealthcareProblem {
    spec: ProblemSpec,
}

impl HealthcareProblem {
    pub fn new(cancer_threshold: f64) -> Result<Self> {
        let spec = ProblemSpec {
            name: "healthcare".into(),
            dims: 2,
            bounds: vec![(20.0, 30.0), (0.0, 1.0)],
            fidelities: FidelitySpace::continuous(0.0)?,
            m: 2,
            q: 1,
            thresholds: vec![ConstraintSpec {
                name: "Cancer".into(),
                value: cancer_threshold,
                direction: ConstraintDirection::AtMost,
            }],
            directions: vec![ObjectiveDirection::Min, ObjectiveDirection::Min],
            cost: CostModel::Exponential { rate: 4.8 },
            option_names: vec!["BMI".into(), "Aspirin".into()],
            objective_names: vec!["Statin".into(), "PSA".into()],
            fidelity_name: "S".into(),
        };
        spec.validate()?;
        Ok(HealthcareProblem { spec })
    }
}

impl Problem for HealthcareProblem {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn evaluate_raw(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (statin, psa, cancer) = healthcare_eval(x[0], x[1], s);
        Ok((vec![statin, psa], vec![cancer]))
    }
}
