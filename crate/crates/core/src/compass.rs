//! The Experiment Compass: the structured, natural-language experiment
//! description a campaign starts from.
//!
//! On disk it is a JSON document:
//!
//! ```json
//! {
//!   "title": "...",
//!   "description": "...",
//!   "objective": {"name": "yield", "direction": "maximize", "unit": "%"},
//!   "parameters": [{"name": "x1", "type": "continuous", "bounds": [0, 1]}],
//!   "constraints": "...",
//!   "budget": {"rounds": 10, "candidates_per_round": 3, "bo_pool_size": 5}
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Direction, ParameterSpec, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Rounds including the initialization round.
    pub rounds: usize,
    pub candidates_per_round: usize,
    pub bo_pool_size: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            rounds: 10,
            candidates_per_round: 3,
            bo_pool_size: 5,
        }
    }
}

impl Budget {
    pub fn total_evaluations(&self) -> usize {
        self.rounds * self.candidates_per_round
    }

    /// Batch sizes for `total` evaluations; the last batch takes the remainder.
    pub fn batches(&self, total: usize) -> Vec<usize> {
        let n = self.candidates_per_round.max(1);
        let mut out = vec![n; total / n];
        if total % n != 0 {
            out.push(total % n);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CompassDocument", try_from = "CompassDocument")]
pub struct ExperimentCompass {
    pub title: String,
    pub description: String,
    pub space: SearchSpace,
    pub constraints_text: Option<String>,
    pub objective_unit: Option<String>,
    pub budget: Budget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObjectiveDocument {
    name: String,
    direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CompassDocument {
    title: String,
    #[serde(default)]
    description: String,
    objective: ObjectiveDocument,
    parameters: Vec<ParameterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constraints: Option<String>,
    #[serde(default)]
    budget: Budget,
}

impl From<ExperimentCompass> for CompassDocument {
    fn from(c: ExperimentCompass) -> Self {
        CompassDocument {
            title: c.title,
            description: c.description,
            objective: ObjectiveDocument {
                name: c.space.objective_name,
                direction: c.space.direction,
                unit: c.objective_unit,
            },
            parameters: c.space.parameters,
            constraints: c.constraints_text,
            budget: c.budget,
        }
    }
}

impl TryFrom<CompassDocument> for ExperimentCompass {
    type Error = String;

    fn try_from(d: CompassDocument) -> std::result::Result<Self, String> {
        Ok(ExperimentCompass {
            title: d.title,
            description: d.description,
            space: SearchSpace {
                parameters: d.parameters,
                objective_name: d.objective.name,
                direction: d.objective.direction,
            },
            constraints_text: d.constraints,
            objective_unit: d.objective.unit,
            budget: d.budget,
        })
    }
}

impl ExperimentCompass {
    pub fn new(title: &str, description: &str, space: SearchSpace) -> Self {
        ExperimentCompass {
            title: title.to_string(),
            description: description.to_string(),
            space,
            constraints_text: None,
            objective_unit: None,
            budget: Budget::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("compass: {e}")))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("compass serializes")
    }
}

/// Lists every invariant the compass violates. An empty list means valid.
pub fn validate_compass(compass: &ExperimentCompass) -> Vec<String> {
    let mut out = Vec::new();
    if compass.title.trim().is_empty() {
        out.push("title empty".to_string());
    }
    if compass.space.objective_name.trim().is_empty() {
        out.push("objective name empty".to_string());
    }
    out.extend(compass.space.violations());
    let b = &compass.budget;
    if b.rounds == 0 {
        out.push("budget.rounds must be positive".to_string());
    }
    if b.candidates_per_round == 0 {
        out.push("budget.candidates_per_round must be positive".to_string());
    }
    if b.bo_pool_size == 0 {
        out.push("budget.bo_pool_size must be positive".to_string());
    }
    if b.candidates_per_round > b.bo_pool_size {
        out.push("candidates_per_round exceeds bo_pool_size".to_string());
    }
    out
}
