//! The campaign engine: an ask/tell loop over the event log.
//!
//! `suggest` returns the open trials, or proposes the next round when none
//! are open. With a language model attached, each round after the first is
//! preceded by a digest step: notes are extracted from the previous
//! reasoning, verified and stored, knowledge is retrieved for the current
//! keywords, and the insights are revised. Without one the engine is plain
//! batch Bayesian optimization and reproduces `run_bo` exactly.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use lodestar_core::baselines::RandomSearchState;
use lodestar_core::benchmarks::Objective;
use lodestar_core::bo::{propose_pool, streams};
use lodestar_core::campaign::{CampaignState, CampaignStatus, InsightsObject, Observation, PoolRecord, Trial, TrialFailure, TrialOrigin};
use lodestar_core::compass::{validate_compass, ExperimentCompass};
use lodestar_core::seeds::derive_seed;
use lodestar_core::space::PointAssignment;

use crate::backend::ChatBackend;
use crate::error::{AgentError, AgentResult};
use crate::events::{
    CampaignConfig, CampaignEvent, Clock, Created, EventPayload, EventSink, InsightsRecord, NoteStoredRecord, Outcome,
    PoolSnapshot, Proposal, Report,
};
use crate::knowledge::{render_knowledge, verify_note, KnowledgeStore, KnowledgeTriple, NoteSource};
use crate::prompts::{Phase, PromptBundle};
use crate::reasoning::{hypothesis_table, render_hypothesis_table, top_up, Overview, Reasoner, Values};

/// A chat backend with the prompts to drive it.
#[derive(Clone, Copy)]
pub struct Llm<'a> {
    pub backend: &'a dyn ChatBackend,
    pub prompts: &'a PromptBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub round: usize,
    pub trials: Vec<Trial>,
    /// No budget left, or no admissible point remains.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub round: usize,
    pub trial_id: String,
    pub value: f64,
    pub best_so_far: f64,
}

/// Everything replay must reproduce, for equality checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSnapshot {
    pub id: String,
    pub config: CampaignConfig,
    pub state: CampaignState,
    pub overview: Option<Overview>,
    pub proposals: Vec<Proposal>,
    pub insight_records: Vec<InsightsRecord>,
    pub notes: Vec<NoteStoredRecord>,
    pub knowledge_triples: Vec<KnowledgeTriple>,
    pub report: Option<Report>,
}

pub struct Campaign {
    id: String,
    config: CampaignConfig,
    state: CampaignState,
    overview: Option<Overview>,
    proposals: Vec<Proposal>,
    insight_records: Vec<InsightsRecord>,
    notes: Vec<NoteStoredRecord>,
    knowledge: KnowledgeStore,
    report: Option<Report>,
    events: Vec<CampaignEvent>,
    sink: Box<dyn EventSink>,
    clock: Clock,
}

impl std::fmt::Debug for Campaign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Campaign")
            .field("id", &self.id)
            .field("events", &self.events.len())
            .field("status", &self.state.status)
            .finish()
    }
}

impl Campaign {
    fn empty(created: &Created, sink: Box<dyn EventSink>, clock: Clock) -> Self {
        Campaign {
            id: created.id.clone(),
            config: created.config.clone(),
            state: CampaignState::new(created.compass.clone()),
            overview: None,
            proposals: Vec::new(),
            insight_records: Vec::new(),
            notes: Vec::new(),
            knowledge: KnowledgeStore::default(),
            report: None,
            events: Vec::new(),
            sink,
            clock,
        }
    }

    pub fn create(id: &str, compass: ExperimentCompass, config: CampaignConfig, sink: Box<dyn EventSink>, clock: Clock) -> AgentResult<Self> {
        let problems = validate_compass(&compass);
        if !problems.is_empty() {
            return Err(lodestar_core::Error::Config(problems.join("; ")).into());
        }
        let acq = config.acquisition.violations();
        if !acq.is_empty() {
            return Err(lodestar_core::Error::Config(acq.join("; ")).into());
        }
        if config.budget == 0 {
            return Err(AgentError::EmptyCampaign("budget of zero evaluations".into()));
        }
        let created = Created {
            id: id.to_string(),
            compass,
            config,
        };
        let mut campaign = Campaign::empty(&created, sink, clock);
        campaign.emit(|_| EventPayload::Created(created))?;
        Ok(campaign)
    }

    /// Rebuilds a campaign from its log. New events go to `sink`.
    pub fn replay(events: Vec<CampaignEvent>, sink: Box<dyn EventSink>, clock: Clock) -> AgentResult<Self> {
        let created = match events.first() {
            Some(CampaignEvent {
                seq: 0,
                payload: EventPayload::Created(c),
                ..
            }) => c.clone(),
            _ => return Err(AgentError::EventLog("log must start with a created event".into())),
        };
        let mut campaign = Campaign::empty(&created, sink, clock);
        for (i, event) in events.into_iter().enumerate() {
            if event.seq != i as u64 {
                return Err(AgentError::EventLog(format!("event {i} carries sequence {}", event.seq)));
            }
            if i > 0 {
                campaign.check(&event.payload)?;
            }
            campaign.apply(&event.payload);
            campaign.events.push(event);
        }
        Ok(campaign)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn compass(&self) -> &ExperimentCompass {
        &self.state.compass
    }

    pub fn overview(&self) -> Option<&Overview> {
        self.overview.as_ref()
    }

    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn insight_records(&self) -> &[InsightsRecord] {
        &self.insight_records
    }

    pub fn notes(&self) -> &[NoteStoredRecord] {
        &self.notes
    }

    pub fn knowledge(&self) -> &KnowledgeStore {
        &self.knowledge
    }

    pub fn report(&self) -> Option<&Report> {
        self.report.as_ref()
    }

    pub fn events(&self) -> &[CampaignEvent] {
        &self.events
    }

    pub fn is_finished(&self) -> bool {
        self.state.status == CampaignStatus::Finished
    }

    pub fn remaining(&self) -> usize {
        self.config.budget.saturating_sub(self.state.spent() + self.state.open_trials().len())
    }

    /// Every degradation flag raised so far, in event order.
    pub fn flags(&self) -> Vec<String> {
        self.events.iter().flat_map(|e| e.payload.flags().iter().cloned()).collect()
    }

    pub fn snapshot(&self) -> CampaignSnapshot {
        CampaignSnapshot {
            id: self.id.clone(),
            config: self.config.clone(),
            state: self.state.clone(),
            overview: self.overview.clone(),
            proposals: self.proposals.clone(),
            insight_records: self.insight_records.clone(),
            notes: self.notes.clone(),
            knowledge_triples: self.knowledge.triples().to_vec(),
            report: self.report.clone(),
        }
    }

    pub fn trajectory(&self) -> Vec<TrajectoryPoint> {
        let dir = self.state.space().direction;
        let mut best: Option<f64> = None;
        self.state
            .observed()
            .into_iter()
            .map(|(t, v)| {
                let b = match best {
                    Some(b) if !dir.better(v, b) => b,
                    _ => v,
                };
                best = Some(b);
                TrajectoryPoint {
                    round: t.round,
                    trial_id: t.id.clone(),
                    value: v,
                    best_so_far: b,
                }
            })
            .collect()
    }

    fn emit(&mut self, build: impl FnOnce(DateTime<Utc>) -> EventPayload) -> AgentResult<()> {
        let seq = self.events.len() as u64;
        let timestamp = self.clock.at(seq);
        let event = CampaignEvent {
            seq,
            payload: build(timestamp),
            timestamp,
        };
        self.sink.append(&event)?;
        self.apply(&event.payload);
        self.events.push(event);
        Ok(())
    }

    /// Rejects events that could not have been produced by this engine.
    fn check(&self, payload: &EventPayload) -> AgentResult<()> {
        match payload {
            EventPayload::Created(_) => Err(AgentError::EventLog("second created event".into())),
            EventPayload::ObservationRecorded(o) => {
                let id = o.trial_id();
                if self.state.trial(id).is_none() {
                    return Err(AgentError::EventLog(format!("outcome for unknown trial {id}")));
                }
                if !self.state.open_trials().iter().any(|t| t.id == id) {
                    return Err(AgentError::EventLog(format!("second outcome for trial {id}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn apply(&mut self, payload: &EventPayload) {
        match payload {
            EventPayload::Created(_) => {}
            EventPayload::TrialProposed(p) => {
                self.state.trials.extend(p.trials.iter().cloned());
                if let Some(pool) = &p.pool {
                    self.state.candidate_pool_history.push(PoolRecord {
                        round: p.round,
                        points: pool.points.clone(),
                    });
                }
                self.state.status = CampaignStatus::Running;
                self.proposals.push(p.clone());
            }
            EventPayload::ObservationRecorded(Outcome::Observed(o)) => self.state.observations.push(o.clone()),
            EventPayload::ObservationRecorded(Outcome::Failed(f)) => self.state.failures.push(f.clone()),
            EventPayload::Insights(r) => {
                if let Some(o) = &r.overview {
                    self.overview = Some(o.clone());
                }
                if let Some(i) = &r.insights {
                    self.state.insight_history.push(i.clone());
                }
                self.insight_records.push(r.clone());
            }
            EventPayload::NoteStored(n) => {
                self.knowledge
                    .store_note(n.note.clone(), n.verification.accepted.clone())
                    .expect("in-memory store cannot fail");
                self.notes.push(n.clone());
            }
            EventPayload::Finished(r) => {
                self.report = Some(r.clone());
                self.state.status = CampaignStatus::Finished;
            }
        }
    }

    fn reasoner<'a>(&self, llm: Llm<'a>) -> Reasoner<'a> {
        Reasoner {
            backend: llm.backend,
            prompts: llm.prompts,
            narrative_temperature: self.config.narrative_temperature,
        }
    }

    /// Open trials if any; otherwise proposes the next round.
    pub fn suggest(&mut self, llm: Option<Llm<'_>>) -> AgentResult<Suggestion> {
        let round = self.state.next_round();
        let open: Vec<Trial> = self.state.open_trials().into_iter().cloned().collect();
        if !open.is_empty() {
            let round = open.iter().map(|t| t.round).max().unwrap_or(0);
            return Ok(Suggestion {
                round,
                trials: open,
                exhausted: false,
            });
        }
        let n = self.compass().budget.candidates_per_round.max(1).min(self.remaining());
        if n == 0 || self.is_finished() {
            return Ok(Suggestion {
                round,
                trials: Vec::new(),
                exhausted: true,
            });
        }
        let proposal = if round == 0 {
            self.propose_initial(llm, n)?
        } else {
            match self.propose_round(llm, round, n)? {
                Some(p) => p,
                None => {
                    return Ok(Suggestion {
                        round,
                        trials: Vec::new(),
                        exhausted: true,
                    })
                }
            }
        };
        let trials = proposal.trials.clone();
        self.emit(|_| EventPayload::TrialProposed(proposal))?;
        Ok(Suggestion {
            round,
            trials,
            exhausted: false,
        })
    }

    fn make_trials(&self, round: usize, points: Vec<(PointAssignment, TrialOrigin)>) -> Vec<Trial> {
        let base = self.state.trials.len();
        points
            .into_iter()
            .enumerate()
            .map(|(i, (point, origin))| Trial {
                id: format!("t{:04}", base + i),
                round,
                point,
                origin,
            })
            .collect()
    }

    fn propose_initial(&mut self, llm: Option<Llm<'_>>, n: usize) -> AgentResult<Proposal> {
        let mut flags = Vec::new();
        let mut chosen: Vec<PointAssignment> = Vec::new();
        if let Some(llm) = llm {
            if !self.insight_records.iter().any(|r| r.round == 0) {
                self.initialize(llm, n)?;
            }
            if let Some(insights) = self.insight_records.iter().find(|r| r.round == 0).and_then(|r| r.insights.as_ref()) {
                chosen = insights.candidates.iter().take(n).cloned().collect();
            }
            if chosen.len() < n {
                flags.push("init-topped-up".to_string());
            }
        }
        let from_llm = chosen.len();
        top_up(self.state.space(), &mut chosen, n, self.config.seed);
        let points = chosen
            .into_iter()
            .enumerate()
            .map(|(i, p)| (p, if i < from_llm { TrialOrigin::LlmInit } else { TrialOrigin::BoProposed }))
            .collect();
        Ok(Proposal {
            round: 0,
            trials: self.make_trials(0, points),
            pool: None,
            rationale: String::new(),
            flags,
            audit: Vec::new(),
        })
    }

    /// Overview, compass notes and initial insights.
    fn initialize(&mut self, llm: Llm<'_>, n: usize) -> AgentResult<()> {
        let reasoner = self.reasoner(llm);
        let compass = self.compass().clone();
        let mut flags = Vec::new();
        let mut audit = Vec::new();
        let overview = match reasoner.overview(&compass) {
            Ok(o) => Some(o),
            Err(e) => {
                flags.push("overview-failed".to_string());
                audit.push(format!("overview: {e}"));
                None
            }
        };
        let values = Values::from([("compass", crate::reasoning::describe_compass(&compass))]);
        self.store_notes(&reasoner, Phase::NotesCompass, &values, &compass.description, NoteSource::Compass, None)?;

        let keywords: Vec<String> = overview
            .as_ref()
            .map(|o| o.entities.iter().filter(|e| e.is_known()).map(|e| e.mention.clone()).collect())
            .unwrap_or_default();
        let retrieved = self.retrieve(&keywords);
        let overview_text = overview.as_ref().map(|o| o.text.clone()).unwrap_or_default();
        let out = reasoner.initial_insights(&compass, &overview_text, &retrieved, n);
        let failed = !out.flags.is_empty();
        flags.extend(out.flags);
        audit.extend(out.audit);
        let record = InsightsRecord {
            round: 0,
            overview,
            insights: if failed { None } else { Some(out.value) },
            retrieved_knowledge: retrieved,
            raw: out.raw,
            flags,
            audit,
        };
        self.emit(|_| EventPayload::Insights(record))
    }

    fn retrieve(&self, keywords: &[String]) -> String {
        match self
            .knowledge
            .query_keywords(keywords, self.config.knowledge_k.max(1), self.config.knowledge_depth.clamp(1, 2))
        {
            Ok(result) => render_knowledge(&result, self.config.knowledge_budget),
            Err(_) => String::new(),
        }
    }

    fn store_notes(
        &mut self,
        reasoner: &Reasoner<'_>,
        phase: Phase,
        values: &Values,
        source_text: &str,
        source: NoteSource,
        round: Option<usize>,
    ) -> AgentResult<()> {
        let id = self.knowledge.next_note_id();
        let out = reasoner.extract_notes(phase, values, source_text, &id, source, round);
        if !out.value.has_content() {
            return Ok(());
        }
        let verification = verify_note(&out.value, self.state.space(), &self.config.whitelist, self.knowledge.triples());
        let record = NoteStoredRecord {
            note: out.value,
            verification,
            flags: out.flags,
            audit: out.audit,
        };
        self.emit(|_| EventPayload::NoteStored(record))
    }

    /// Notes from the latest reasoning, retrieval, revised insights.
    fn digest(&mut self, llm: Llm<'_>, round: usize) -> AgentResult<()> {
        let reasoner = self.reasoner(llm);
        let reasoning = self
            .insight_records
            .last()
            .map(|r| {
                if r.raw.trim().is_empty() {
                    r.insights.as_ref().map(|i| i.comments.clone()).unwrap_or_default()
                } else {
                    r.raw.clone()
                }
            })
            .unwrap_or_default();
        if !reasoning.trim().is_empty() {
            let values = Values::from([("reasoning", reasoning.clone())]);
            self.store_notes(&reasoner, Phase::NotesReasoning, &values, &reasoning, NoteSource::Reasoning, Some(round - 1))?;
        }
        let keywords = self.state.insight_history.last().map(|i| i.keywords.clone()).unwrap_or_default();
        let retrieved = self.retrieve(&keywords);
        let values = Values::from([
            ("compass", crate::reasoning::describe_compass(self.compass())),
            ("overview", self.overview.as_ref().map(|o| o.text.clone()).unwrap_or_default()),
            ("insight_history", render_history(&self.state.insight_history)),
            ("trial_data", render_trials(&self.state)),
            ("retrieved_knowledge", or_none(&retrieved)),
        ]);
        let out = reasoner.loop_insights(&values, self.state.space());
        let record = InsightsRecord {
            round,
            overview: None,
            insights: out.value,
            retrieved_knowledge: retrieved,
            raw: out.raw,
            flags: out.flags,
            audit: out.audit,
        };
        self.emit(|_| EventPayload::Insights(record))
    }

    /// `None` when the space has no admissible point left.
    fn propose_round(&mut self, llm: Option<Llm<'_>>, round: usize, n: usize) -> AgentResult<Option<Proposal>> {
        if let Some(llm) = llm {
            if !self.insight_records.iter().any(|r| r.round == round) {
                self.digest(llm, round)?;
            }
        }
        let space = self.state.space().clone();
        let observed: Vec<(PointAssignment, f64)> = self.state.observed().into_iter().map(|(t, v)| (t.point.clone(), v)).collect();
        let pool_size = self.compass().budget.bo_pool_size.max(n);
        let mut flags = Vec::new();
        let mut audit = Vec::new();
        let pool = match propose_pool(&space, &observed, pool_size, round, self.config.seed, &self.config.acquisition) {
            Ok(pool) if pool.points.is_empty() => return Ok(None),
            Ok(pool) => PoolSnapshot {
                points: pool.points,
                acquisition_values: pool.acquisition_values,
            },
            Err(e) => {
                flags.push("surrogate-fallback".to_string());
                audit.push(format!("surrogate: {e}"));
                let mut random = RandomSearchState::new(derive_seed(self.config.seed, streams::RANDOM_SEARCH * 1_000_003 + round as u64));
                let points = random.ask(&space, n);
                let trials = self.make_trials(round, points.into_iter().map(|p| (p, TrialOrigin::BoProposed)).collect());
                return Ok(Some(Proposal {
                    round,
                    trials,
                    pool: None,
                    rationale: String::new(),
                    flags,
                    audit,
                }));
            }
        };
        let (indices, origin, rationale) = match llm {
            Some(llm) => {
                let values = Values::from([
                    ("insight_history", render_history(&self.state.insight_history)),
                    ("trial_data", render_trials(&self.state)),
                    ("candidate_pool", render_pool(&pool)),
                    ("count", n.to_string()),
                ]);
                let out = self.reasoner(llm).filter_candidates(&values, pool.points.len(), n);
                flags.extend(out.flags);
                audit.extend(out.audit);
                let origin = if out.value.fallback { TrialOrigin::BoProposed } else { TrialOrigin::LlmSelected };
                (out.value.indices, origin, out.value.rationale)
            }
            None => ((0..n.min(pool.points.len())).collect(), TrialOrigin::BoProposed, String::new()),
        };
        let points = indices.iter().map(|&i| (pool.points[i].clone(), origin)).collect();
        Ok(Some(Proposal {
            round,
            trials: self.make_trials(round, points),
            pool: Some(pool),
            rationale,
            flags,
            audit,
        }))
    }

    /// Opens a round of externally chosen points, for baselines that pick
    /// their own candidates. Fails while trials are open.
    pub fn propose_points(&mut self, points: Vec<PointAssignment>, origin: TrialOrigin) -> AgentResult<Suggestion> {
        if self.is_finished() {
            return Err(AgentError::InvalidObservation("campaign is finished".into()));
        }
        if !self.state.open_trials().is_empty() {
            return Err(AgentError::InvalidObservation("trials are still open".into()));
        }
        if points.is_empty() || points.len() > self.remaining() {
            return Err(AgentError::InvalidObservation(format!(
                "{} points proposed with {} evaluations remaining",
                points.len(),
                self.remaining()
            )));
        }
        for p in &points {
            self.state.space().validate(p)?;
        }
        let round = self.state.next_round();
        let trials = self.make_trials(round, points.into_iter().map(|p| (p, origin)).collect());
        let proposal = Proposal {
            round,
            trials: trials.clone(),
            pool: None,
            rationale: String::new(),
            flags: Vec::new(),
            audit: Vec::new(),
        };
        self.emit(|_| EventPayload::TrialProposed(proposal))?;
        Ok(Suggestion {
            round,
            trials,
            exhausted: false,
        })
    }

    fn outcome_allowed(&self, trial_id: &str) -> AgentResult<()> {
        if self.is_finished() {
            return Err(AgentError::InvalidObservation("campaign is finished".into()));
        }
        if self.state.trial(trial_id).is_none() {
            return Err(AgentError::UnknownTrial(trial_id.to_string()));
        }
        if !self.state.open_trials().iter().any(|t| t.id == trial_id) {
            return Err(AgentError::AlreadyObserved(trial_id.to_string()));
        }
        Ok(())
    }

    pub fn observe(&mut self, trial_id: &str, value: f64) -> AgentResult<Observation> {
        self.outcome_allowed(trial_id)?;
        if !value.is_finite() {
            return Err(AgentError::InvalidObservation(format!("value {value} is not finite")));
        }
        let trial_id = trial_id.to_string();
        self.emit(|ts| {
            EventPayload::ObservationRecorded(Outcome::Observed(Observation {
                trial_id,
                value,
                recorded_at: ts,
            }))
        })?;
        Ok(self.state.observations.last().cloned().expect("just recorded"))
    }

    /// Records a failed evaluation. It spends budget but never reaches the
    /// surrogate.
    pub fn fail(&mut self, trial_id: &str, reason: &str) -> AgentResult<()> {
        self.outcome_allowed(trial_id)?;
        let failure = TrialFailure {
            trial_id: trial_id.to_string(),
            reason: reason.to_string(),
        };
        self.emit(|_| EventPayload::ObservationRecorded(Outcome::Failed(failure)))
    }

    /// Writes the summary and conclusion. Repeated calls return the first
    /// report.
    pub fn finalize(&mut self, llm: Option<Llm<'_>>) -> AgentResult<Report> {
        if let Some(r) = &self.report {
            return Ok(r.clone());
        }
        let rows = hypothesis_table(&self.state.insight_history);
        let table = render_hypothesis_table(&rows);
        let header = self.outcome_header();
        let mut flags = Vec::new();
        let (summary, conclusion) = match llm {
            Some(llm) => {
                let reasoner = self.reasoner(llm);
                let values = Values::from([
                    ("compass", crate::reasoning::describe_compass(self.compass())),
                    ("insight_history", render_history(&self.state.insight_history)),
                    ("trial_data", render_trials(&self.state)),
                ]);
                let summary = match reasoner.summary_narrative(&values) {
                    Ok(text) => format!("{table}\n{text}\n"),
                    Err(_) => {
                        flags.push("summary-mechanical".to_string());
                        table.clone()
                    }
                };
                let conclusion = match reasoner.conclusion_narrative(&values) {
                    Ok(text) if has_numbered_sections(&text, 6) => format!("{header}\n{text}\n"),
                    _ => {
                        flags.push("conclusion-mechanical".to_string());
                        format!("{header}\n{}", self.mechanical_sections())
                    }
                };
                (summary, conclusion)
            }
            None => (table, format!("{header}\n{}", self.mechanical_sections())),
        };
        let report = Report {
            hypotheses: rows,
            summary,
            conclusion,
            flags,
        };
        self.emit(|_| EventPayload::Finished(report.clone()))?;
        Ok(report)
    }

    /// Best point and value, stated from the data.
    fn outcome_header(&self) -> String {
        let unit = self.compass().objective_unit.clone().unwrap_or_default();
        let failed = self.state.failures.len();
        match self.state.best() {
            Some((t, v)) => format!(
                "Best {}: {v}{}{unit} at {} (trial {}, round {}). {} evaluations observed, {failed} failed.\n",
                self.state.space().objective_name,
                if unit.is_empty() { "" } else { " " },
                t.point,
                t.id,
                t.round,
                self.state.observations.len(),
            ),
            None => format!("No observations recorded. {failed} evaluations failed.\n"),
        }
    }

    fn mechanical_sections(&self) -> String {
        let trajectory = self.trajectory();
        let improvements: Vec<String> = trajectory
            .iter()
            .enumerate()
            .filter(|(i, p)| *i == 0 || p.best_so_far != trajectory[i - 1].best_so_far)
            .map(|(_, p)| format!("{} ({})", p.trial_id, p.value))
            .collect();
        let rounds = self.state.next_round();
        let findings: Vec<String> = hypothesis_table(&self.state.insight_history)
            .into_iter()
            .map(|r| format!("{}: {} ({:?})", r.id, r.statement, r.status).to_lowercase())
            .collect();
        let best = self
            .state
            .best()
            .map(|(t, v)| format!("{v} at {}", t.point))
            .unwrap_or_else(|| "none".to_string());
        format!(
            "1. Key outcomes\nBest observed value {best}.\n\n\
             2. Retrospective\n{rounds} rounds run.\n\n\
             3. Milestones\n{}\n\n\
             4. Findings\n{}\n\n\
             5. Forward guidance\nNo model narrative available; continue sampling around the best point.\n\n\
             6. Impact\nNot assessed.\n",
            if improvements.is_empty() { "None recorded.".to_string() } else { improvements.join(", ") },
            if findings.is_empty() { "None recorded.".to_string() } else { findings.join("\n") },
        )
    }

    /// Suggest, evaluate and record until the budget is spent, then
    /// finalize. Evaluator errors become recorded failures.
    pub fn run_to_completion(&mut self, llm: Option<Llm<'_>>, objective: &dyn Objective) -> AgentResult<Report> {
        loop {
            let s = self.suggest(llm)?;
            if s.trials.is_empty() {
                break;
            }
            for t in s.trials {
                match objective.evaluate(&t.point) {
                    Ok(v) if v.is_finite() => {
                        self.observe(&t.id, v)?;
                    }
                    Ok(v) => self.fail(&t.id, &format!("non-finite value {v}"))?,
                    Err(e) => self.fail(&t.id, &e.to_string())?,
                }
            }
        }
        self.finalize(llm)
    }
}

/// Lines starting `1.` through `n.` appear in order.
fn has_numbered_sections(text: &str, n: usize) -> bool {
    let mut next = 1;
    for line in text.lines() {
        if next <= n && line.trim_start().starts_with(&format!("{next}.")) {
            next += 1;
        }
    }
    next > n
}

fn or_none(text: &str) -> String {
    if text.trim().is_empty() {
        "(none)".to_string()
    } else {
        text.to_string()
    }
}

pub fn render_trials(state: &CampaignState) -> String {
    if state.trials.is_empty() {
        return "(none)".to_string();
    }
    let mut out = String::new();
    for t in &state.trials {
        let outcome = match state.observation(&t.id) {
            Some(o) => o.value.to_string(),
            None => match state.failures.iter().find(|f| f.trial_id == t.id) {
                Some(f) => format!("failed ({})", f.reason),
                None => "pending".to_string(),
            },
        };
        out.push_str(&format!("{} round {}: {} -> {}\n", t.id, t.round, t.point, outcome));
    }
    out
}

pub fn render_history(history: &[InsightsObject]) -> String {
    if history.is_empty() {
        return "(none)".to_string();
    }
    let mut out = String::new();
    for (i, ins) in history.iter().enumerate() {
        out.push_str(&format!("Insights {i}: {}\n", ins.comments.trim()));
        if !ins.keywords.is_empty() {
            out.push_str(&format!("  keywords: {}\n", ins.keywords.join(", ")));
        }
        for h in &ins.hypotheses {
            out.push_str(&format!("  {} [{:?}, {}]: {}\n", h.id, h.status, h.confidence, h.statement));
        }
    }
    out
}

pub fn render_pool(pool: &PoolSnapshot) -> String {
    pool.points
        .iter()
        .zip(&pool.acquisition_values)
        .enumerate()
        .map(|(i, (p, v))| format!("{i}: {p} (log acquisition {v:.4})\n"))
        .collect()
}
