use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::compass::ExperimentCompass;
use crate::error::{Error, Result};
use crate::space::{Direction, ParamValue, ParameterSpec, PointAssignment, SearchSpace};

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
pub const HARTMANN6_MINIMIZER: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
pub const HARTMANN6_MINIMUM: f64 = -3.32237;

pub const ACKLEY_BOUND: f64 = 32.768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Levy,
    Hartmann6,
    Ackley,
    Rosenbrock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFunction {
    pub kind: SyntheticKind,
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    pub optimum_value: f64,
    /// `None` when only an approximate optimizer is known.
    pub optimizer: Option<Vec<f64>>,
}

fn check(x: &[f64], bounds: &[(f64, f64)]) -> Result<()> {
    if x.len() != bounds.len() {
        return Err(Error::Dimension {
            expected: bounds.len(),
            actual: x.len(),
        });
    }
    for (i, (v, (lo, hi))) in x.iter().zip(bounds).enumerate() {
        if !(v.is_finite() && *v >= *lo && *v <= *hi) {
            return Err(Error::Domain(format!("x{} = {} outside [{}, {}]", i + 1, v, lo, hi)));
        }
    }
    Ok(())
}

pub fn levy_raw(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let mut total = (PI * w[0]).sin().powi(2);
    for wi in &w[..d - 1] {
        total += (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2));
    }
    total + (w[d - 1] - 1.0).powi(2) * (1.0 + (2.0 * PI * w[d - 1]).sin().powi(2))
}

pub fn hartmann6_raw(x: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..4 {
        let inner: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
        total -= HARTMANN_ALPHA[i] * (-inner).exp();
    }
    total
}

/// Averages over `d` coordinates, which reduces to the usual 1/2 in 2D.
pub fn ackley_raw(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cos = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cos.exp() + 20.0 + E
}

pub fn rosenbrock_raw(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

pub fn eval_levy(x: &[f64]) -> Result<f64> {
    check(x, &[(-10.0, 10.0); 5])?;
    Ok(levy_raw(x))
}

pub fn eval_hartmann6(x: &[f64]) -> Result<f64> {
    check(x, &[(0.0, 1.0); 6])?;
    Ok(hartmann6_raw(x))
}

pub fn eval_ackley(x: &[f64]) -> Result<f64> {
    check(x, &vec![(-ACKLEY_BOUND, ACKLEY_BOUND); x.len()])?;
    Ok(ackley_raw(x))
}

pub fn eval_rosenbrock(x: &[f64]) -> Result<f64> {
    check(x, &[(-5.0, 10.0); 3])?;
    Ok(rosenbrock_raw(x))
}

impl SyntheticFunction {
    pub fn levy5() -> Self {
        SyntheticFunction {
            kind: SyntheticKind::Levy,
            dim: 5,
            bounds: vec![(-10.0, 10.0); 5],
            optimum_value: 0.0,
            optimizer: Some(vec![1.0; 5]),
        }
    }

    pub fn hartmann6() -> Self {
        SyntheticFunction {
            kind: SyntheticKind::Hartmann6,
            dim: 6,
            bounds: vec![(0.0, 1.0); 6],
            optimum_value: HARTMANN6_MINIMUM,
            optimizer: None,
        }
    }

    pub fn ackley(dim: usize) -> Self {
        SyntheticFunction {
            kind: SyntheticKind::Ackley,
            dim,
            bounds: vec![(-ACKLEY_BOUND, ACKLEY_BOUND); dim],
            optimum_value: 0.0,
            optimizer: Some(vec![0.0; dim]),
        }
    }

    pub fn rosenbrock3() -> Self {
        SyntheticFunction {
            kind: SyntheticKind::Rosenbrock,
            dim: 3,
            bounds: vec![(-5.0, 10.0); 3],
            optimum_value: 0.0,
            optimizer: Some(vec![1.0; 3]),
        }
    }

    /// Looks up a function by short name: `levy`, `hartmann6`, `ackley2`,
    /// `ackley15`, `rosenbrock`, or `ackley` with an explicit dimension.
    pub fn by_name(name: &str, dim: Option<usize>) -> Result<Self> {
        match (name, dim) {
            ("levy", None | Some(5)) => Ok(Self::levy5()),
            ("hartmann6" | "hartmann", None | Some(6)) => Ok(Self::hartmann6()),
            ("ackley2", None) => Ok(Self::ackley(2)),
            ("ackley15", None) => Ok(Self::ackley(15)),
            ("ackley", Some(d)) if d >= 1 => Ok(Self::ackley(d)),
            ("ackley", None) => Ok(Self::ackley(2)),
            ("rosenbrock", None | Some(3)) => Ok(Self::rosenbrock3()),
            _ => Err(Error::Config(format!("unknown synthetic function {name} (dim {dim:?})"))),
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            SyntheticKind::Levy => "levy".into(),
            SyntheticKind::Hartmann6 => "hartmann6".into(),
            SyntheticKind::Ackley => format!("ackley{}", self.dim),
            SyntheticKind::Rosenbrock => "rosenbrock".into(),
        }
    }

    /// Replaces the admissible box, e.g. with bounds taken from a compass.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: bounds.len(),
            });
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check(x, &self.bounds)?;
        Ok(match self.kind {
            SyntheticKind::Levy => levy_raw(x),
            SyntheticKind::Hartmann6 => hartmann6_raw(x),
            SyntheticKind::Ackley => ackley_raw(x),
            SyntheticKind::Rosenbrock => rosenbrock_raw(x),
        })
    }

    fn variable(i: usize) -> String {
        format!("x{}", i + 1)
    }

    pub fn space(&self) -> SearchSpace {
        SearchSpace::new(
            self.bounds
                .iter()
                .enumerate()
                .map(|(i, (lo, hi))| ParameterSpec::continuous(&Self::variable(i), *lo, *hi))
                .collect(),
            "y",
            Direction::Minimize,
        )
    }

    pub fn evaluate_point(&self, point: &PointAssignment) -> Result<f64> {
        let x = (0..self.dim)
            .map(|i| match point.get(&Self::variable(i)) {
                Some(ParamValue::Real(v)) => Ok(*v),
                _ => Err(Error::InvalidPoint(format!("{} missing or not numeric", Self::variable(i)))),
            })
            .collect::<Result<Vec<f64>>>()?;
        self.evaluate(&x)
    }

    /// A compass whose text never names the function.
    pub fn compass(&self) -> ExperimentCompass {
        let description = format!(
            "Minimize an unknown black-box mathematical function of {} continuous variables \
             x1..x{}. Each evaluation returns a single real value y. Nothing else is known \
             about its shape.",
            self.dim, self.dim
        );
        ExperimentCompass::new(
            &format!("Black-box minimization in {} dimensions", self.dim),
            &description,
            self.space(),
        )
    }
}
