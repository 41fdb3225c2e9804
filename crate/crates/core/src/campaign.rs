//! Campaign records: trials, observations, insights and the campaign state
//! the orchestrator threads through every round.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::compass::ExperimentCompass;
use crate::error::{Error, Result};
use crate::space::{Direction, PointAssignment, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialOrigin {
    LlmInit,
    BoProposed,
    LlmSelected,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: String,
    /// Round 0 holds the initialization trials.
    pub round: usize,
    pub point: PointAssignment,
    pub origin: TrialOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub trial_id: String,
    pub value: f64,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisStatus {
    #[default]
    Proposed,
    Supported,
    Refuted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub statement: String,
    pub confidence: f64,
    #[serde(default)]
    pub status: HypothesisStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InsightsObject {
    #[serde(default)]
    pub comments: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub hypotheses: Vec<Hypothesis>,
    #[serde(default)]
    pub candidates: Vec<PointAssignment>,
}

impl InsightsObject {
    pub fn violations(&self, space: &SearchSpace) -> Vec<String> {
        let mut out = Vec::new();
        for h in &self.hypotheses {
            if !(0.0..=1.0).contains(&h.confidence) {
                out.push(format!(
                    "hypothesis {} confidence {} outside [0, 1]",
                    h.id, h.confidence
                ));
            }
        }
        if !self.hypotheses.is_empty() && self.keywords.is_empty() {
            out.push("keywords empty while hypotheses present".to_string());
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if let Err(e) = space.validate(c) {
                out.push(format!("candidate {i}: {e}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CampaignStatus {
    Initializing,
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub round: usize,
    pub points: Vec<PointAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub compass: ExperimentCompass,
    pub trials: Vec<Trial>,
    pub observations: Vec<Observation>,
    #[serde(default)]
    pub failures: Vec<TrialFailure>,
    pub insight_history: Vec<InsightsObject>,
    pub candidate_pool_history: Vec<PoolRecord>,
    pub status: CampaignStatus,
}

impl CampaignState {
    pub fn new(compass: ExperimentCompass) -> Self {
        CampaignState {
            compass,
            trials: Vec::new(),
            observations: Vec::new(),
            failures: Vec::new(),
            insight_history: Vec::new(),
            candidate_pool_history: Vec::new(),
            status: CampaignStatus::Initializing,
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.compass.space
    }

    pub fn trial(&self, id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.id == id)
    }

    pub fn observation(&self, trial_id: &str) -> Option<&Observation> {
        self.observations.iter().find(|o| o.trial_id == trial_id)
    }

    pub fn next_trial_id(&self) -> String {
        format!("t{:04}", self.trials.len())
    }

    /// Index of the next round to propose.
    pub fn next_round(&self) -> usize {
        self.trials.iter().map(|t| t.round + 1).max().unwrap_or(0)
    }

    /// Number of evaluations that consumed budget (observed or failed).
    pub fn spent(&self) -> usize {
        self.observations.len() + self.failures.len()
    }

    /// Trials with neither an observation nor a recorded failure.
    pub fn open_trials(&self) -> Vec<&Trial> {
        self.trials
            .iter()
            .filter(|t| {
                self.observation(&t.id).is_none()
                    && !self.failures.iter().any(|f| f.trial_id == t.id)
            })
            .collect()
    }

    /// (trial, value) pairs in (round, trial id) order.
    pub fn observed(&self) -> Vec<(&Trial, f64)> {
        let mut out: Vec<(&Trial, f64)> = self
            .observations
            .iter()
            .filter_map(|o| self.trial(&o.trial_id).map(|t| (t, o.value)))
            .collect();
        out.sort_by(|a, b| (a.0.round, &a.0.id).cmp(&(b.0.round, &b.0.id)));
        out
    }

    pub fn best(&self) -> Option<(&Trial, f64)> {
        let dir = self.compass.space.direction;
        self.observed()
            .into_iter()
            .fold(None, |best: Option<(&Trial, f64)>, (t, v)| match best {
                Some((_, bv)) if !dir.better(v, bv) => best,
                _ => Some((t, v)),
            })
    }

    /// Checks referential invariants: observations point at trials, at most
    /// one observation per trial, contiguous rounds.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, o) in self.observations.iter().enumerate() {
            if self.trial(&o.trial_id).is_none() {
                out.push(format!("observation for unknown trial {}", o.trial_id));
            }
            if self.observations[..i].iter().any(|p| p.trial_id == o.trial_id) {
                out.push(format!("duplicate observation for trial {}", o.trial_id));
            }
            if !o.value.is_finite() {
                out.push(format!("non-finite observation for trial {}", o.trial_id));
            }
        }
        let mut rounds: Vec<usize> = self.trials.iter().map(|t| t.round).collect();
        rounds.sort_unstable();
        rounds.dedup();
        if rounds.iter().enumerate().any(|(i, &r)| i != r) {
            out.push("round indices not contiguous".to_string());
        }
        out
    }
}

/// Running optimum of an ordered value sequence.
pub fn best_so_far(values: &[f64], direction: Direction) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyData("best_so_far needs at least one value".into()));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut best = values[0];
    for &v in values {
        if direction.better(v, best) {
            best = v;
        }
        out.push(best);
    }
    Ok(out)
}
