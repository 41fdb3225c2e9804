//! The language-model phases of a campaign. Each phase renders its prompt,
//! calls the backend, and parses the reply; every failure path degrades to
//! a mechanical fallback and is reported through `flags` instead of
//! aborting the campaign.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use lodestar_core::bo::initial_design;
use lodestar_core::campaign::{HypothesisStatus, InsightsObject};
use lodestar_core::compass::ExperimentCompass;
use lodestar_core::space::{ParamValue, ParameterKind, PointAssignment, SearchSpace};

use crate::backend::{ChatBackend, ChatMessage, ChatRequest};
use crate::error::{AgentError, AgentResult};
use crate::knowledge::{parse_note_text, NoteRecord, NoteSource};
use crate::prompts::{Phase, PromptBundle};

/// Attempts per structured phase before falling back.
pub const PARSE_ATTEMPTS: usize = 3;

pub type Values = BTreeMap<&'static str, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub mention: String,
    /// `None` when the mention matches nothing in the space.
    pub parameter: Option<String>,
    pub choice: Option<String>,
}

impl EntityMention {
    pub fn is_known(&self) -> bool {
        self.parameter.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overview {
    pub text: String,
    pub entities: Vec<EntityMention>,
}

/// Result of a structured phase plus its degradation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome<T> {
    pub value: T,
    /// The last raw reply, empty if the backend never answered.
    pub raw: String,
    pub flags: Vec<String>,
    pub audit: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub rationale: String,
    /// True when the reply was unusable and the top of the pool was taken.
    pub fallback: bool,
}

pub struct Reasoner<'a> {
    pub backend: &'a dyn ChatBackend,
    pub prompts: &'a PromptBundle,
    pub narrative_temperature: f64,
}

impl Reasoner<'_> {
    fn request(&self, phase: Phase, values: &Values) -> AgentResult<ChatRequest> {
        let prompt = self.prompts.render(phase, values)?;
        Ok(ChatRequest {
            messages: vec![ChatMessage::system(&self.prompts.system), ChatMessage::user(prompt)],
            temperature: if phase.structured() { 0.0 } else { self.narrative_temperature },
        })
    }

    /// Calls the backend up to [`PARSE_ATTEMPTS`] times, echoing each parse
    /// error back. Returns the parsed value with the raw reply, or the last
    /// error with whatever raw reply came before it.
    fn structured<T>(&self, phase: Phase, values: &Values, parse: impl Fn(&str) -> Result<T, String>) -> (Result<T, String>, String) {
        let mut request = match self.request(phase, values) {
            Ok(r) => r,
            Err(e) => return (Err(e.to_string()), String::new()),
        };
        let mut last_raw = String::new();
        let mut last_err = String::new();
        for _ in 0..PARSE_ATTEMPTS {
            let reply = match self.backend.complete(&request) {
                Ok(r) => r,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            match parse(&reply) {
                Ok(v) => return (Ok(v), reply),
                Err(e) => {
                    request.messages.push(ChatMessage::assistant(reply.clone()));
                    request.messages.push(ChatMessage::user(format!(
                        "That reply could not be used: {e}. Reply again with only the requested format."
                    )));
                    last_raw = reply;
                    last_err = e;
                }
            }
        }
        (Err(last_err), last_raw)
    }

    fn narrative(&self, phase: Phase, values: &Values) -> AgentResult<String> {
        let request = self.request(phase, values)?;
        let reply = self.backend.complete(&request)?;
        if reply.trim().is_empty() {
            return Err(AgentError::Backend(format!("empty {phase:?} reply")));
        }
        Ok(reply.trim().to_string())
    }

    pub fn overview(&self, compass: &ExperimentCompass) -> AgentResult<Overview> {
        let values = Values::from([("compass", describe_compass(compass))]);
        let request = self.request(Phase::Overview, &values)?;
        let mut last = AgentError::Backend("no attempt made".into());
        for _ in 0..PARSE_ATTEMPTS {
            match self.backend.complete(&request) {
                Ok(reply) => return Ok(parse_overview(&reply, &compass.space)),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    /// Valid model candidates only, at most `n`; the caller tops up.
    pub fn initial_insights(
        &self,
        compass: &ExperimentCompass,
        overview: &str,
        knowledge: &str,
        n: usize,
    ) -> PhaseOutcome<InsightsObject> {
        let space = &compass.space;
        let values = Values::from([
            ("compass", describe_compass(compass)),
            ("overview", or_none(overview)),
            ("retrieved_knowledge", or_none(knowledge)),
            ("count", n.to_string()),
        ]);
        let (parsed, raw) = self.structured(Phase::InitInsights, &values, |r| parse_insights(r, space));
        let mut flags = Vec::new();
        let mut audit = Vec::new();
        let mut insights = match parsed {
            Ok((insights, dropped)) => {
                audit.extend(dropped);
                insights
            }
            Err(e) => {
                flags.push("init-insights-fallback".to_string());
                audit.push(format!("initial insights unusable: {e}"));
                InsightsObject::default()
            }
        };
        insights.candidates.truncate(n);
        PhaseOutcome {
            value: insights,
            raw,
            flags,
            audit,
        }
    }

    /// `None` in the outcome means no usable insights this round.
    pub fn loop_insights(&self, values: &Values, space: &SearchSpace) -> PhaseOutcome<Option<InsightsObject>> {
        let (parsed, raw) = self.structured(Phase::LoopInsights, values, |r| parse_insights(r, space));
        match parsed {
            Ok((insights, dropped)) => PhaseOutcome {
                value: Some(insights),
                raw,
                flags: Vec::new(),
                audit: dropped,
            },
            Err(e) => PhaseOutcome {
                value: None,
                raw,
                flags: vec!["loop-insights-failed".to_string()],
                audit: vec![format!("loop insights unusable: {e}")],
            },
        }
    }

    /// Picks `n` distinct pool members. A single attempt; anything malformed
    /// falls back to the first `n` (best acquisition value).
    pub fn filter_candidates(&self, values: &Values, pool_len: usize, n: usize) -> PhaseOutcome<Selection> {
        let top = Selection {
            indices: (0..n.min(pool_len)).collect(),
            rationale: String::new(),
            fallback: true,
        };
        if pool_len <= n {
            return PhaseOutcome {
                value: Selection { fallback: false, ..top },
                raw: String::new(),
                flags: Vec::new(),
                audit: Vec::new(),
            };
        }
        let reply = self
            .request(Phase::Select, values)
            .and_then(|req| self.backend.complete(&req));
        let (raw, parsed) = match reply {
            Ok(r) => {
                let parsed = parse_selection(&r, pool_len, n);
                (r, parsed)
            }
            Err(e) => (String::new(), Err(e.to_string())),
        };
        match parsed {
            Ok(value) => PhaseOutcome {
                value,
                raw,
                flags: Vec::new(),
                audit: Vec::new(),
            },
            Err(e) => PhaseOutcome {
                value: top,
                raw,
                flags: vec!["selection-fallback".to_string()],
                audit: vec![format!("selection unusable: {e}")],
            },
        }
    }

    /// Notes from free text. Falls back to a note holding `source_text` in
    /// its general section.
    pub fn extract_notes(&self, phase: Phase, values: &Values, source_text: &str, id: &str, source: NoteSource, round: Option<usize>) -> PhaseOutcome<NoteRecord> {
        let (parsed, raw) = self.structured(phase, values, |r| {
            let parsed = parse_note_text(r, id, source, round);
            if parsed.note.has_content() {
                Ok(parsed)
            } else {
                Err("no note sections or triples found".to_string())
            }
        });
        match parsed {
            Ok(p) => PhaseOutcome {
                value: p.note,
                raw,
                flags: Vec::new(),
                audit: p.audit,
            },
            Err(e) => {
                let mut note = NoteRecord::empty(id, source, round);
                note.general_notes = source_text.trim().to_string();
                PhaseOutcome {
                    value: note,
                    raw,
                    flags: vec!["notes-fallback".to_string()],
                    audit: vec![format!("notes unusable: {e}")],
                }
            }
        }
    }

    pub fn summary_narrative(&self, values: &Values) -> AgentResult<String> {
        self.narrative(Phase::Summary, values)
    }

    pub fn conclusion_narrative(&self, values: &Values) -> AgentResult<String> {
        self.narrative(Phase::Conclusion, values)
    }
}

fn or_none(text: &str) -> String {
    if text.trim().is_empty() {
        "(none)".to_string()
    } else {
        text.to_string()
    }
}

/// The compass as the model sees it.
pub fn describe_compass(compass: &ExperimentCompass) -> String {
    compass.to_json_pretty()
}

/// Pulls the first JSON object out of a reply, tolerating code fences and
/// surrounding prose.
pub fn extract_json(text: &str) -> Option<Value> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    serde_json::from_str(&text[start..=end]).ok()
}

fn match_entity(mention: &str, space: &SearchSpace) -> EntityMention {
    let m = mention.trim().to_lowercase();
    for p in &space.parameters {
        let levels: Vec<String> = match &p.kind {
            ParameterKind::Categorical { choices } => choices.clone(),
            ParameterKind::Ordinal { choices } => choices.iter().map(|c| c.to_string()).collect(),
            ParameterKind::Continuous { .. } => Vec::new(),
        };
        if let Some(c) = levels.iter().find(|c| c.to_lowercase() == m) {
            return EntityMention {
                mention: mention.to_string(),
                parameter: Some(p.name.clone()),
                choice: Some(c.clone()),
            };
        }
    }
    let param = space.parameters.iter().find(|p| p.name.to_lowercase() == m);
    EntityMention {
        mention: mention.to_string(),
        parameter: param.map(|p| p.name.clone()),
        choice: None,
    }
}

/// Parameter names and categorical choices that occur as whole words in
/// `text`, in space order.
pub fn scan_entities(text: &str, space: &SearchSpace) -> Vec<EntityMention> {
    let words: Vec<String> = crate::knowledge::tokens(text).collect();
    let has = |term: &str| {
        let parts: Vec<String> = crate::knowledge::tokens(term).collect();
        !parts.is_empty() && words.windows(parts.len()).any(|w| w == parts.as_slice())
    };
    let mut out = Vec::new();
    for p in &space.parameters {
        if has(&p.name) {
            out.push(match_entity(&p.name, space));
        }
        if let ParameterKind::Categorical { choices } = &p.kind {
            for c in choices {
                if has(c) {
                    out.push(match_entity(c, space));
                }
            }
        }
    }
    out
}

pub fn parse_overview(reply: &str, space: &SearchSpace) -> Overview {
    if let Some(v) = extract_json(reply) {
        if let Some(text) = v.get("overview").and_then(Value::as_str) {
            let entities = match v.get("entities").and_then(Value::as_array) {
                Some(list) => list
                    .iter()
                    .filter_map(Value::as_str)
                    .map(|m| match_entity(m, space))
                    .collect(),
                None => scan_entities(text, space),
            };
            return Overview {
                text: text.trim().to_string(),
                entities,
            };
        }
    }
    let text = reply.trim().to_string();
    Overview {
        entities: scan_entities(&text, space),
        text,
    }
}

/// Parses an insights reply. Structural problems are errors (and trigger a
/// retry); invalid or duplicate candidates are dropped and listed.
pub fn parse_insights(reply: &str, space: &SearchSpace) -> Result<(InsightsObject, Vec<String>), String> {
    let value = extract_json(reply).ok_or("reply contains no JSON object")?;
    let raw_candidates = value.get("candidates").cloned().unwrap_or(Value::Array(Vec::new()));
    let mut shell = value.clone();
    if let Some(obj) = shell.as_object_mut() {
        obj.remove("candidates");
    }
    let mut insights: InsightsObject = serde_json::from_value(shell).map_err(|e| format!("insights schema: {e}"))?;
    let problems = insights.violations(space);
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    let mut dropped = Vec::new();
    let list = raw_candidates.as_array().cloned().unwrap_or_default();
    for (i, c) in list.into_iter().enumerate() {
        let point: PointAssignment = match serde_json::from_value(c) {
            Ok(p) => normalize(p, space),
            Err(e) => {
                dropped.push(format!("candidate {i} dropped: {e}"));
                continue;
            }
        };
        if let Err(e) = space.validate(&point) {
            dropped.push(format!("candidate {i} dropped: {e}"));
        } else if insights.candidates.contains(&point) {
            dropped.push(format!("candidate {i} dropped: duplicate"));
        } else {
            insights.candidates.push(point);
        }
    }
    Ok((insights, dropped))
}

/// Numbers written as strings for numeric parameters become numbers.
fn normalize(mut point: PointAssignment, space: &SearchSpace) -> PointAssignment {
    for p in &space.parameters {
        if matches!(p.kind, ParameterKind::Categorical { .. }) {
            continue;
        }
        if let Some(ParamValue::Choice(s)) = point.values.get(&p.name) {
            if let Ok(v) = s.trim().parse::<f64>() {
                point.values.insert(p.name.clone(), ParamValue::Real(v));
            }
        }
    }
    point
}

/// Fills `points` up to `n` with initial-design points not already present.
pub fn top_up(space: &SearchSpace, points: &mut Vec<PointAssignment>, n: usize, seed: u64) {
    let mut extra = n;
    while points.len() < n {
        let design = initial_design(space, extra, seed);
        for p in design {
            if points.len() < n && !points.contains(&p) {
                points.push(p);
            }
        }
        if extra > n + 1000 {
            break;
        }
        extra += n;
    }
}

pub fn parse_selection(reply: &str, pool_len: usize, n: usize) -> Result<Selection, String> {
    let (list, rationale) = match extract_json(reply) {
        Some(v) => {
            let list = v.get("selected").and_then(Value::as_array).cloned().ok_or("no \"selected\" list")?;
            let rationale = v.get("rationale").and_then(Value::as_str).unwrap_or_default().to_string();
            (list, rationale)
        }
        None => {
            let start = reply.find('[').ok_or("no index list")?;
            let end = reply[start..].find(']').ok_or("unterminated index list")? + start;
            let list: Vec<Value> = serde_json::from_str(&reply[start..=end]).map_err(|e| format!("index list: {e}"))?;
            (list, String::new())
        }
    };
    let indices: Vec<usize> = list
        .iter()
        .map(|v| v.as_u64().map(|i| i as usize).ok_or(format!("not an index: {v}")))
        .collect::<Result<_, _>>()?;
    if indices.len() != n {
        return Err(format!("expected {n} indices, got {}", indices.len()));
    }
    if let Some(i) = indices.iter().find(|&&i| i >= pool_len) {
        return Err(format!("index {i} outside pool of {pool_len}"));
    }
    for (k, i) in indices.iter().enumerate() {
        if indices[..k].contains(i) {
            return Err(format!("duplicate index {i}"));
        }
    }
    Ok(Selection {
        indices,
        rationale,
        fallback: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub id: String,
    pub statement: String,
    /// One entry per insights object that mentions the hypothesis.
    pub confidences: Vec<f64>,
    pub status: HypothesisStatus,
}

/// Confidence evolution per hypothesis id, in order of first appearance.
pub fn hypothesis_table(history: &[InsightsObject]) -> Vec<HypothesisRow> {
    let mut rows: Vec<HypothesisRow> = Vec::new();
    for insights in history {
        for h in &insights.hypotheses {
            match rows.iter_mut().find(|r| r.id == h.id) {
                Some(row) => {
                    row.confidences.push(h.confidence);
                    row.status = h.status;
                    row.statement = h.statement.clone();
                }
                None => rows.push(HypothesisRow {
                    id: h.id.clone(),
                    statement: h.statement.clone(),
                    confidences: vec![h.confidence],
                    status: h.status,
                }),
            }
        }
    }
    rows
}

pub fn render_hypothesis_table(rows: &[HypothesisRow]) -> String {
    let mut out = String::from("| Hypothesis | Confidence by round | Status |\n|---|---|---|\n");
    for r in rows {
        let conf: Vec<String> = r.confidences.iter().map(|c| format!("{c}")).collect();
        let status = match r.status {
            HypothesisStatus::Proposed => "proposed",
            HypothesisStatus::Supported => "supported",
            HypothesisStatus::Refuted => "refuted",
        };
        out.push_str(&format!("| {}: {} | [{}] | {} |\n", r.id, r.statement, conf.join(", "), status));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use lodestar_core::campaign::Hypothesis;
    use lodestar_core::space::{Direction, ParameterSpec};

    fn space() -> SearchSpace {
        SearchSpace::new(
            vec![
                ParameterSpec::categorical("electrophile", &["Sulfone", "Iodine", "Bromine"]),
                ParameterSpec::categorical("base", &["CsF", "KOH"]),
                ParameterSpec::continuous("temp", 20.0, 80.0),
            ],
            "yield",
            Direction::Maximize,
        )
    }

    fn compass() -> ExperimentCompass {
        ExperimentCompass::new("t", "Use CsF with the sulfone.", space())
    }

    fn reasoner<'a>(backend: &'a ScriptedBackend, prompts: &'a PromptBundle) -> Reasoner<'a> {
        Reasoner {
            backend,
            prompts,
            narrative_temperature: 0.7,
        }
    }

    #[test]
    fn overview_json_and_entities() {
        let backend = ScriptedBackend::from_sequence([r#"Sure. {"overview": "Pair CsF with sulfone.", "entities": ["CsF", "electrophile", "Palladium"]}"#]);
        let prompts = PromptBundle::default();
        let o = reasoner(&backend, &prompts).overview(&compass()).unwrap();
        assert_eq!(o.text, "Pair CsF with sulfone.");
        assert_eq!(o.entities[0].parameter.as_deref(), Some("base"));
        assert_eq!(o.entities[0].choice.as_deref(), Some("CsF"));
        assert_eq!(o.entities[1].parameter.as_deref(), Some("electrophile"));
        assert!(!o.entities[2].is_known());
    }

    #[test]
    fn plain_overview_scans_text() {
        let o = parse_overview("Sulfone with CsF base looks best.", &space());
        let found: Vec<_> = o.entities.iter().map(|e| e.mention.as_str()).collect();
        assert_eq!(found, vec!["Sulfone", "base", "CsF"]);
    }

    #[test]
    fn empty_description_still_gives_overview() {
        let backend = ScriptedBackend::from_sequence(["Nothing is known yet."]);
        let prompts = PromptBundle::default();
        let c = ExperimentCompass::new("t", "", space());
        let o = reasoner(&backend, &prompts).overview(&c).unwrap();
        assert!(!o.text.is_empty());
        assert!(o.entities.is_empty());
    }

    #[test]
    fn invalid_candidate_dropped_and_topped_up() {
        let reply = r#"{"comments": "c", "keywords": ["sulfone"], "hypotheses": [{"id": "h1", "statement": "s", "confidence": 0.6}],
            "candidates": [{"electrophile": "Sulfone", "base": "CsF", "temp": 50},
                           {"electrophile": "Fluorine", "base": "CsF", "temp": 50},
                           {"electrophile": "Iodine", "base": "KOH", "temp": "35"}]}"#;
        let backend = ScriptedBackend::from_sequence([reply]);
        let prompts = PromptBundle::default();
        let mut out = reasoner(&backend, &prompts).initial_insights(&compass(), "o", "", 3);
        assert_eq!(out.value.candidates.len(), 2);
        assert!(out.flags.is_empty());
        assert_eq!(out.audit.len(), 1);
        assert_eq!(out.value.candidates[1].get("temp"), Some(&ParamValue::Real(35.0)));
        top_up(&space(), &mut out.value.candidates, 3, 1);
        assert_eq!(out.value.candidates.len(), 3);
        for c in &out.value.candidates {
            space().validate(c).unwrap();
        }
    }

    #[test]
    fn garbage_falls_back_after_retries() {
        let backend = ScriptedBackend::from_sequence(["nope", "still nope", "{not json"]);
        let prompts = PromptBundle::default();
        let out = reasoner(&backend, &prompts).initial_insights(&compass(), "o", "", 3);
        assert!(out.value.candidates.is_empty());
        assert_eq!(out.flags, vec!["init-insights-fallback"]);
        assert_eq!(backend.consumed(), 3);
    }

    #[test]
    fn retry_echoes_the_error() {
        let good = r#"{"comments": "", "keywords": [], "hypotheses": [], "candidates": []}"#;
        let backend = ScriptedBackend::from_sequence(["bad", good]);
        let prompts = PromptBundle::default();
        let r = reasoner(&backend, &prompts);
        let out = r.loop_insights(
            &Values::from([
                ("compass", "c".to_string()),
                ("overview", "o".to_string()),
                ("insight_history", "".to_string()),
                ("trial_data", "".to_string()),
                ("retrieved_knowledge", "".to_string()),
            ]),
            &space(),
        );
        assert!(out.value.is_some());
        assert!(out.flags.is_empty());
    }

    #[test]
    fn selection_contract() {
        assert_eq!(parse_selection("[0,2,4]", 5, 3).unwrap().indices, vec![0, 2, 4]);
        assert_eq!(
            parse_selection(r#"{"selected": [3, 1, 0], "rationale": "why"}"#, 5, 3).unwrap().indices,
            vec![3, 1, 0]
        );
        assert!(parse_selection("[0,0,1]", 5, 3).is_err());
        assert!(parse_selection("[0,1,7]", 5, 3).is_err());
        assert!(parse_selection("[0,1]", 5, 3).is_err());
        assert!(parse_selection("pick the first", 5, 3).is_err());
    }

    #[test]
    fn duplicate_selection_falls_back_to_top() {
        let backend = ScriptedBackend::from_sequence(["[0,0,1]"]);
        let prompts = PromptBundle::default();
        let values = Values::from([
            ("insight_history", String::new()),
            ("trial_data", String::new()),
            ("candidate_pool", String::new()),
            ("count", "3".to_string()),
        ]);
        let out = reasoner(&backend, &prompts).filter_candidates(&values, 5, 3);
        assert_eq!(out.value.indices, vec![0, 1, 2]);
        assert!(out.value.fallback);
        assert_eq!(out.flags, vec!["selection-fallback"]);
    }

    #[test]
    fn confidence_table_assembly() {
        let h = |c: f64, s: HypothesisStatus| Hypothesis {
            id: "h1".into(),
            statement: "CsF helps".into(),
            confidence: c,
            status: s,
        };
        let history = vec![
            InsightsObject {
                hypotheses: vec![h(0.5, HypothesisStatus::Proposed)],
                keywords: vec!["CsF".into()],
                ..Default::default()
            },
            InsightsObject {
                hypotheses: vec![h(0.8, HypothesisStatus::Refuted)],
                keywords: vec!["CsF".into()],
                ..Default::default()
            },
        ];
        let rows = hypothesis_table(&history);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].confidences, vec![0.5, 0.8]);
        assert_eq!(rows[0].status, HypothesisStatus::Refuted);
        assert!(render_hypothesis_table(&rows).contains("| h1: CsF helps | [0.5, 0.8] | refuted |"));
    }
}
