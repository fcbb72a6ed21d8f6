//! Classic synthetic objective pairs lifted to multiple fidelities.
//!
//! The exact low-fidelity forms used by the original multi-objective
//! multi-fidelity benchmarks are not reproduced here; instead each function
//! degrades as `f(x, s) = f(x, 1) + (1 - s) * b(x)` with a fixed smooth bias
//! field `b` documented next to it. The structural property that matters is
//! preserved: the target fidelity is exact, everything below it is biased.

use std::f64::consts::PI;

use crate::cost::CostModel;
use crate::problem::{ObjectiveDirection, Problem, ProblemSpec};
use crate::space::FidelitySpace;
use crate::Result;

/// Branin rescaled to the unit square: `x1' = 15 x1 - 5`, `x2' = 15 x2`.
pub fn branin(x: &[f64]) -> f64 {
    let x1 = 15.0 * x[0] - 5.0;
    let x2 = 15.0 * x[1];
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

/// Currin exponential on the unit square; the `x2 = 0` limit of the leading
/// factor is 1.
pub fn currin(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let factor = if x2 == 0.0 {
        1.0
    } else {
        1.0 - (-1.0 / (2.0 * x2)).exp()
    };
    let numerator = 2300.0 * x1.powi(3) + 1900.0 * x1 * x1 + 2092.0 * x1 + 60.0;
    let denominator = 100.0 * x1.powi(3) + 500.0 * x1 * x1 + 4.0 * x1 + 20.0;
    factor * numerator / denominator
}

/// Park function 1 on the unit hypercube; `x1` is kept away from zero so the
/// division is defined at the boundary.
pub fn park1(x: &[f64]) -> f64 {
    let x1 = x[0].max(1e-8);
    let (x2, x3, x4) = (x[1], x[2], x[3]);
    x1 / 2.0 * ((1.0 + (x2 + x3 * x3) * x4 / (x1 * x1)).sqrt() - 1.0)
        + (x1 + 3.0 * x4) * (1.0 + x3.sin()).exp()
}

/// Park function 2 on the unit hypercube.
pub fn park2(x: &[f64]) -> f64 {
    2.0 / 3.0 * (x[0] + x[1]).exp() - x[3] * x[2].sin() + x[2]
}

/// Branin + Currin pair with fidelity bias fields
/// `b_branin(x) = 10 cos(2π x1) sin(π x2)` and
/// `b_currin(x) = 3 (x1 + x2) - 3`.
#[derive(Debug)]
pub struct BraninCurrinProblem {
    spec: ProblemSpec,
}

impl BraninCurrinProblem {
    pub fn new() -> Result<Self> {
        let spec = ProblemSpec {
            name: "branin-currin".into(),
            dims: 2,
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            fidelities: FidelitySpace::continuous(0.0)?,
            m: 2,
            q: 0,
            thresholds: vec![],
            directions: vec![ObjectiveDirection::Min, ObjectiveDirection::Min],
            cost: CostModel::Exponential { rate: 4.8 },
            option_names: vec!["x1".into(), "x2".into()],
            objective_names: vec!["branin".into(), "currin".into()],
            fidelity_name: "s".into(),
        };
        spec.validate()?;
        Ok(BraninCurrinProblem { spec })
    }
}

pub fn branin_currin_eval(x: &[f64], s: f64) -> (f64, f64) {
    let bias_branin = 10.0 * (2.0 * PI * x[0]).cos() * (PI * x[1]).sin();
    let bias_currin = 3.0 * (x[0] + x[1]) - 3.0;
    (
        branin(x) + (1.0 - s) * bias_branin,
        currin(x) + (1.0 - s) * bias_currin,
    )
}

impl Problem for BraninCurrinProblem {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn evaluate_raw(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (f1, f2) = branin_currin_eval(x, s);
        Ok((vec![f1, f2], vec![]))
    }
}

/// Park pair with fidelity bias fields
/// `b_park1(x) = 2 sin(π x1) (x3 - 0.5)` and
/// `b_park2(x) = 1.5 cos(π x2) + x4 - 0.5`.
#[derive(Debug)]
pub struct ParkProblem {
    spec: ProblemSpec,
}

impl ParkProblem {
    pub fn new() -> Result<Self> {
        let spec = ProblemSpec {
            name: "park".into(),
            dims: 4,
            bounds: vec![(0.0, 1.0); 4],
            fidelities: FidelitySpace::continuous(0.0)?,
            m: 2,
            q: 0,
            thresholds: vec![],
            directions: vec![ObjectiveDirection::Min, ObjectiveDirection::Min],
            cost: CostModel::Exponential { rate: 4.8 },
            option_names: (1..=4).map(|i| format!("x{i}")).collect(),
            objective_names: vec!["park1".into(), "park2".into()],
            fidelity_name: "s".into(),
        };
        spec.validate()?;
        Ok(ParkProblem { spec })
    }
}

pub fn park_eval(x: &[f64], s: f64) -> (f64, f64) {
    let bias1 = 2.0 * (PI * x[0]).sin() * (x[2] - 0.5);
    let bias2 = 1.5 * (PI * x[1]).cos() + x[3] - 0.5;
    (park1(x) + (1.0 - s) * bias1, park2(x) + (1.0 - s) * bias2)
}

impl Problem for ParkProblem {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn evaluate_raw(&self, x: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (f1, f2) = park_eval(x, s);
        Ok((vec![f1, f2], vec![]))
    }
}
