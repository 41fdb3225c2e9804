//! Typed mixed continuous / ordinal / categorical search spaces and the
//! one-hot encoding the surrogate works in.
//!
//! Encoding layout follows parameter order. Continuous and ordinal
//! parameters occupy one min-max scaled column each; a categorical parameter
//! occupies one column per choice (one-hot, choice order).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// True if `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    /// Sign that turns the objective into a maximization target.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ParameterKind {
    Continuous {
        bounds: [f64; 2],
    },
    #[serde(alias = "discrete-ordinal")]
    Ordinal {
        choices: Vec<f64>,
    },
    Categorical {
        choices: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParameterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl ParameterSpec {
    pub fn continuous(name: &str, low: f64, high: f64) -> Self {
        ParameterSpec {
            name: name.to_string(),
            kind: ParameterKind::Continuous { bounds: [low, high] },
            unit: None,
        }
    }

    pub fn ordinal(name: &str, levels: &[f64]) -> Self {
        ParameterSpec {
            name: name.to_string(),
            kind: ParameterKind::Ordinal {
                choices: levels.to_vec(),
            },
            unit: None,
        }
    }

    pub fn categorical<S: AsRef<str>>(name: &str, choices: &[S]) -> Self {
        ParameterSpec {
            name: name.to_string(),
            kind: ParameterKind::Categorical {
                choices: choices.iter().map(|c| c.as_ref().to_string()).collect(),
            },
            unit: None,
        }
    }

    pub fn with_unit(mut self, unit: &str) -> Self {
        self.unit = Some(unit.to_string());
        self
    }

    /// Number of encoded columns.
    pub fn width(&self) -> usize {
        match &self.kind {
            ParameterKind::Continuous { .. } | ParameterKind::Ordinal { .. } => 1,
            ParameterKind::Categorical { choices } => choices.len(),
        }
    }

    /// Number of admissible values, `None` for continuous parameters.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            ParameterKind::Continuous { .. } => None,
            ParameterKind::Ordinal { choices } => Some(choices.len()),
            ParameterKind::Categorical { choices } => Some(choices.len()),
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ParameterKind::Continuous { .. })
    }

    /// The `index`-th admissible value of a discrete parameter.
    pub fn level(&self, index: usize) -> Option<ParamValue> {
        match &self.kind {
            ParameterKind::Continuous { .. } => None,
            ParameterKind::Ordinal { choices } => choices.get(index).map(|v| ParamValue::Real(*v)),
            ParameterKind::Categorical { choices } => {
                choices.get(index).map(|c| ParamValue::Choice(c.clone()))
            }
        }
    }

    /// Invariant violations for this parameter alone, each naming the parameter.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push("parameter name empty".to_string());
        }
        match &self.kind {
            ParameterKind::Continuous { bounds: [low, high] } => {
                if !low.is_finite() || !high.is_finite() {
                    out.push(format!("bounds not finite: {}", self.name));
                } else if low >= high {
                    out.push(format!("bounds degenerate: {}", self.name));
                }
            }
            ParameterKind::Ordinal { choices } => {
                if choices.len() < 2 {
                    out.push(format!("ordinal needs at least 2 levels: {}", self.name));
                }
                if choices.iter().any(|v| !v.is_finite()) {
                    out.push(format!("ordinal level not finite: {}", self.name));
                }
                if choices.windows(2).any(|w| w[0] >= w[1]) {
                    out.push(format!("ordinal levels not strictly increasing: {}", self.name));
                }
            }
            ParameterKind::Categorical { choices } => {
                let mut distinct: Vec<&String> = choices.iter().collect();
                distinct.sort();
                distinct.dedup();
                if distinct.len() != choices.len() {
                    out.push(format!("duplicate choices: {}", self.name));
                }
                if distinct.len() < 2 {
                    out.push(format!("categorical needs at least 2 choices: {}", self.name));
                }
            }
        }
        out
    }

    fn check_value(&self, value: &ParamValue) -> std::result::Result<(), String> {
        match (&self.kind, value) {
            (ParameterKind::Continuous { bounds: [low, high] }, ParamValue::Real(v)) => {
                if v.is_finite() && *v >= *low && *v <= *high {
                    Ok(())
                } else {
                    Err(format!("{}: {} outside [{}, {}]", self.name, v, low, high))
                }
            }
            (ParameterKind::Ordinal { choices }, ParamValue::Real(v)) => {
                if ordinal_index(choices, *v).is_some() {
                    Ok(())
                } else {
                    Err(format!("{}: {} is not one of the levels", self.name, v))
                }
            }
            (ParameterKind::Categorical { choices }, ParamValue::Choice(c)) => {
                if choices.iter().any(|x| x == c) {
                    Ok(())
                } else {
                    Err(format!("{}: '{}' is not among the choices", self.name, c))
                }
            }
            (ParameterKind::Categorical { .. }, ParamValue::Real(v)) => {
                Err(format!("{}: expected a choice string, got {}", self.name, v))
            }
            (_, ParamValue::Choice(c)) => {
                Err(format!("{}: expected a number, got '{}'", self.name, c))
            }
        }
    }
}

fn ordinal_index(levels: &[f64], v: f64) -> Option<usize> {
    levels
        .iter()
        .position(|level| (level - v).abs() <= 1e-9 * level.abs().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub parameters: Vec<ParameterSpec>,
    pub objective_name: String,
    pub direction: Direction,
}

impl SearchSpace {
    pub fn new(parameters: Vec<ParameterSpec>, objective_name: &str, direction: Direction) -> Self {
        SearchSpace {
            parameters,
            objective_name: objective_name.to_string(),
            direction,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.parameters.is_empty() {
            out.push("search space has no parameters".to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                out.push(format!("duplicate parameter name: {}", p.name));
            }
            out.extend(p.violations());
        }
        out
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn encoded_width(&self) -> usize {
        self.parameters.iter().map(ParameterSpec::width).sum()
    }

    pub fn has_continuous(&self) -> bool {
        self.parameters.iter().any(ParameterSpec::is_continuous)
    }

    /// Product of discrete cardinalities; `None` if any parameter is continuous
    /// or the product overflows.
    pub fn discrete_size(&self) -> Option<usize> {
        self.parameters.iter().try_fold(1usize, |acc, p| {
            p.cardinality().and_then(|c| acc.checked_mul(c))
        })
    }

    /// Every point of a fully discrete space in odometer order (last parameter
    /// fastest). Empty when the space has a continuous parameter.
    pub fn enumerate(&self) -> Vec<PointAssignment> {
        let Some(total) = self.discrete_size() else {
            return Vec::new();
        };
        let cards: Vec<usize> = self
            .parameters
            .iter()
            .map(|p| p.cardinality().unwrap_or(1))
            .collect();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; cards.len()];
        for _ in 0..total {
            let mut values = BTreeMap::new();
            for (p, &i) in self.parameters.iter().zip(&idx) {
                values.insert(p.name.clone(), p.level(i).expect("index within cardinality"));
            }
            out.push(PointAssignment { values });
            for k in (0..cards.len()).rev() {
                idx[k] += 1;
                if idx[k] < cards[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }

    /// Checks that `point` assigns exactly one admissible value per parameter.
    pub fn validate(&self, point: &PointAssignment) -> Result<()> {
        let mut problems = Vec::new();
        for p in &self.parameters {
            match point.values.get(&p.name) {
                None => problems.push(format!("{}: missing", p.name)),
                Some(v) => {
                    if let Err(e) = p.check_value(v) {
                        problems.push(e);
                    }
                }
            }
        }
        for name in point.values.keys() {
            if self.parameter(name).is_none() {
                problems.push(format!("{}: unknown parameter", name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPoint(problems.join("; ")))
        }
    }

    pub fn encode(&self, point: &PointAssignment) -> Result<Vec<f64>> {
        self.validate(point)?;
        let mut out = Vec::with_capacity(self.encoded_width());
        for p in &self.parameters {
            let value = &point.values[&p.name];
            match (&p.kind, value) {
                (ParameterKind::Continuous { bounds: [low, high] }, ParamValue::Real(v)) => {
                    out.push((v - low) / (high - low));
                }
                (ParameterKind::Ordinal { choices }, ParamValue::Real(v)) => {
                    let (low, high) = (choices[0], choices[choices.len() - 1]);
                    let i = ordinal_index(choices, *v).expect("validated");
                    out.push((choices[i] - low) / (high - low));
                }
                (ParameterKind::Categorical { choices }, ParamValue::Choice(c)) => {
                    out.extend(choices.iter().map(|x| if x == c { 1.0 } else { 0.0 }));
                }
                _ => unreachable!("validated"),
            }
        }
        Ok(out)
    }

    pub fn decode(&self, vector: &[f64]) -> Result<PointAssignment> {
        let width = self.encoded_width();
        if vector.len() != width {
            return Err(Error::Dimension {
                expected: width,
                actual: vector.len(),
            });
        }
        let mut values = BTreeMap::new();
        let mut offset = 0;
        for p in &self.parameters {
            let value = match &p.kind {
                ParameterKind::Continuous { bounds: [low, high] } => {
                    let u = clip_unit(vector[offset]);
                    ParamValue::Real((low + u * (high - low)).clamp(*low, *high))
                }
                ParameterKind::Ordinal { choices } => {
                    let (low, high) = (choices[0], choices[choices.len() - 1]);
                    let x = low + clip_unit(vector[offset]) * (high - low);
                    let nearest = choices
                        .iter()
                        .copied()
                        .enumerate()
                        .fold((0, f64::INFINITY), |best, (i, c)| {
                            let d = (c - x).abs();
                            if d < best.1 {
                                (i, d)
                            } else {
                                best
                            }
                        })
                        .0;
                    ParamValue::Real(choices[nearest])
                }
                ParameterKind::Categorical { choices } => {
                    let block = &vector[offset..offset + choices.len()];
                    ParamValue::Choice(choices[argmax_first(block)].clone())
                }
            };
            values.insert(p.name.clone(), value);
            offset += p.width();
        }
        Ok(PointAssignment { values })
    }

    /// Snaps an arbitrary encoded vector onto the encoding of the point it
    /// decodes to.
    pub fn project(&self, vector: &[f64]) -> Result<Vec<f64>> {
        let point = self.decode(vector)?;
        self.encode(&point)
    }
}

fn clip_unit(u: f64) -> f64 {
    if u.is_nan() {
        0.0
    } else {
        u.clamp(0.0, 1.0)
    }
}

/// Index of the largest entry; ties go to the lowest index, NaN never wins.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Real(f64),
    Choice(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(v) => write!(f, "{}", v),
            ParamValue::Choice(c) => write!(f, "{}", c),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointAssignment {
    pub values: BTreeMap<String, ParamValue>,
}

impl PointAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn real(self, name: &str, v: f64) -> Self {
        self.with(name, ParamValue::Real(v))
    }

    pub fn choice(self, name: &str, c: &str) -> Self {
        self.with(name, ParamValue::Choice(c.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }

    /// Canonical string form, usable as a map key.
    pub fn key(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{}={}", k, v))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for PointAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed() -> SearchSpace {
        SearchSpace::new(
            vec![
                ParameterSpec::continuous("x", -10.0, 10.0),
                ParameterSpec::categorical("c", &["A", "B", "C"]),
                ParameterSpec::ordinal("t", &[90.0, 105.0, 120.0]),
            ],
            "y",
            Direction::Maximize,
        )
    }

    #[test]
    fn encode_bounds_and_one_hot() {
        let s = SearchSpace::new(
            vec![ParameterSpec::continuous("x", -10.0, 10.0)],
            "y",
            Direction::Maximize,
        );
        let lo = PointAssignment::new().real("x", -10.0);
        let hi = PointAssignment::new().real("x", 10.0);
        assert_eq!(s.encode(&lo).unwrap(), vec![0.0]);
        assert_eq!(s.encode(&hi).unwrap(), vec![1.0]);

        let c = SearchSpace::new(
            vec![ParameterSpec::categorical("c", &["A", "B", "C"])],
            "y",
            Direction::Maximize,
        );
        let b = PointAssignment::new().choice("c", "B");
        assert_eq!(c.encode(&b).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(c.decode(&[0.0, 1.0, 0.0]).unwrap(), b);
        assert_eq!(
            c.decode(&[0.4, 0.4, 0.2]).unwrap(),
            PointAssignment::new().choice("c", "A")
        );
    }

    #[test]
    fn width_counts_one_hot_blocks() {
        assert_eq!(mixed().encoded_width(), 1 + 3 + 1);
    }

    #[test]
    fn invalid_point_names_parameter() {
        let s = mixed();
        let p = PointAssignment::new()
            .real("x", 11.0)
            .choice("c", "A")
            .real("t", 105.0);
        let err = s.encode(&p).unwrap_err();
        assert!(err.to_string().contains("x:"), "{err}");

        let p = PointAssignment::new()
            .real("x", 0.0)
            .choice("c", "Z")
            .real("t", 100.0);
        let msg = s.validate(&p).unwrap_err().to_string();
        assert!(msg.contains("c:") && msg.contains("t:"), "{msg}");
    }

    #[test]
    fn decode_wrong_length_is_dimension_error() {
        assert_eq!(
            mixed().decode(&[0.0; 3]).unwrap_err(),
            Error::Dimension {
                expected: 5,
                actual: 3
            }
        );
    }

    #[test]
    fn decode_clips_and_snaps_ordinal() {
        let p = mixed().decode(&[1.7, 0.0, 0.0, 1.0, 0.55]).unwrap();
        assert_eq!(p.get("x"), Some(&ParamValue::Real(10.0)));
        assert_eq!(p.get("c"), Some(&ParamValue::Choice("C".into())));
        assert_eq!(p.get("t"), Some(&ParamValue::Real(105.0)));
    }

    #[test]
    fn enumerate_discrete_space() {
        let s = SearchSpace::new(
            vec![
                ParameterSpec::categorical("a", &["p", "q"]),
                ParameterSpec::ordinal("b", &[1.0, 2.0, 3.0]),
            ],
            "y",
            Direction::Maximize,
        );
        let all = s.enumerate();
        assert_eq!(all.len(), 6);
        let mut keys: Vec<_> = all.iter().map(PointAssignment::key).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 6);
        assert!(mixed().enumerate().is_empty());
    }

    #[test]
    fn parameter_violations() {
        assert_eq!(
            ParameterSpec::continuous("x1", 1.0, 1.0).violations(),
            vec!["bounds degenerate: x1"]
        );
        assert!(!ParameterSpec::categorical("c", &["A"]).violations().is_empty());
        assert!(!ParameterSpec::categorical("c", &["A", "A"]).violations().is_empty());
        assert!(!ParameterSpec::ordinal("o", &[2.0, 1.0]).violations().is_empty());
    }

    #[test]
    fn parameter_json_shape() {
        let p: ParameterSpec = serde_json::from_str(
            r#"{"name":"Temp_C","type":"discrete-ordinal","choices":[90,105,120],"unit":"C"}"#,
        )
        .unwrap();
        assert_eq!(p.cardinality(), Some(3));
        let text = serde_json::to_string(&ParameterSpec::categorical("b", &["x", "y"])).unwrap();
        assert_eq!(text, r#"{"name":"b","type":"categorical","choices":["x","y"]}"#);
    }
}
