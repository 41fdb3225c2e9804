//! Prompt templates, one per phase of the loop.
//!
//! Templates use `{name}` placeholders; `{{` and `}}` stand for literal
//! braces. Rendering fails if a template references a placeholder the
//! caller did not supply.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AgentError, AgentResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Overview,
    InitInsights,
    LoopInsights,
    Select,
    Summary,
    Conclusion,
    NotesCompass,
    NotesReasoning,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::Overview,
        Phase::InitInsights,
        Phase::LoopInsights,
        Phase::Select,
        Phase::Summary,
        Phase::Conclusion,
        Phase::NotesCompass,
        Phase::NotesReasoning,
    ];

    /// Phases whose reply is parsed as data run at temperature 0.
    pub fn structured(self) -> bool {
        !matches!(self, Phase::Summary | Phase::Conclusion)
    }
}

const SYSTEM: &str = "You are an experienced experimental scientist steering a Bayesian optimization \
campaign. Ground every claim in the data you are given and use parameter names and values \
exactly as declared.";

const OVERVIEW: &str = "Experiment compass:
{compass}

Write a short overview of this experiment: what is optimized, which variables matter, what \
the constraints imply and what prior knowledge suggests. Reply with one JSON object:
{{\"overview\": \"<text>\", \"entities\": [\"<parameter or choice names you mention>\"]}}";

const INIT_INSIGHTS: &str = "Experiment compass:
{compass}

Overview:
{overview}

Relevant knowledge:
{retrieved_knowledge}

Propose {count} starting experiments and the hypotheses behind them. Reply with one JSON object:
{{\"comments\": \"<reasoning>\", \"keywords\": [\"...\"], \"hypotheses\": [{{\"id\": \"h1\", \
\"statement\": \"...\", \"confidence\": 0.5, \"status\": \"proposed\"}}], \"candidates\": \
[{{\"<parameter>\": <value>}}]}}
Every candidate must assign every parameter a declared value.";

const LOOP_INSIGHTS: &str = "Experiment compass:
{compass}

Overview:
{overview}

Earlier insights:
{insight_history}

Results so far:
{trial_data}

Relevant knowledge:
{retrieved_knowledge}

Revise the hypotheses in light of the results. Raise or lower each confidence, mark hypotheses \
the data contradicts as refuted, and add new ones if warranted. Reply with one JSON object with \
the keys comments, keywords, hypotheses and candidates (candidates may be empty).";

const SELECT: &str = "Current insights:
{insight_history}

Results so far:
{trial_data}

The surrogate model proposes these candidates, best acquisition value first:
{candidate_pool}

Choose the {count} candidates most worth running next. Reply with one JSON object:
{{\"selected\": [<indices into the list>], \"rationale\": \"<text>\"}}";

const SUMMARY: &str = "Experiment compass:
{compass}

Insight history:
{insight_history}

Results:
{trial_data}

Judge each hypothesis strictly against the results: which held up, which failed, and how \
confidence shifted over the rounds. Keep it brief.";

const CONCLUSION: &str = "Experiment compass:
{compass}

Insight history:
{insight_history}

Results:
{trial_data}

Write the final report with numbered sections: 1. Key outcomes, 2. Retrospective, \
3. Milestones, 4. Findings, 5. Forward guidance, 6. Impact.";

const NOTES_COMPASS: &str = "Experiment compass:
{compass}

Extract reusable notes from this description. Use exactly these headings, each followed by \
its text: \"Key findings:\", \"Parameter relationships:\", \"Optimization principles:\", \
\"General notes:\", \"Knowledge triples:\". List triples one per line as (Subject, \
RelationInCamelCase, Object).";

const NOTES_REASONING: &str = "Reasoning from the latest round:
{reasoning}

Extract reusable notes from this reasoning. Use exactly these headings, each followed by \
its text: \"Key findings:\", \"Parameter relationships:\", \"Optimization principles:\", \
\"General notes:\", \"Knowledge triples:\". List triples one per line as (Subject, \
RelationInCamelCase, Object).";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub templates: BTreeMap<Phase, String>,
}

impl Default for PromptBundle {
    fn default() -> Self {
        let templates = [
            (Phase::Overview, OVERVIEW),
            (Phase::InitInsights, INIT_INSIGHTS),
            (Phase::LoopInsights, LOOP_INSIGHTS),
            (Phase::Select, SELECT),
            (Phase::Summary, SUMMARY),
            (Phase::Conclusion, CONCLUSION),
            (Phase::NotesCompass, NOTES_COMPASS),
            (Phase::NotesReasoning, NOTES_REASONING),
        ]
        .into_iter()
        .map(|(p, t)| (p, t.to_string()))
        .collect();
        PromptBundle {
            system: SYSTEM.to_string(),
            templates,
        }
    }
}

impl PromptBundle {
    pub fn render(&self, phase: Phase, values: &BTreeMap<&str, String>) -> AgentResult<String> {
        let template = self
            .templates
            .get(&phase)
            .ok_or_else(|| AgentError::Template(format!("no template for {phase:?}")))?;
        render_template(template, values)
    }
}

/// Placeholder names referenced by `template`, in order of appearance.
pub fn placeholders(template: &str) -> AgentResult<Vec<String>> {
    let mut out = Vec::new();
    scan(template, |piece| {
        if let Piece::Name(name) = piece {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
    })?;
    Ok(out)
}

pub fn render_template(template: &str, values: &BTreeMap<&str, String>) -> AgentResult<String> {
    let missing: Vec<String> = placeholders(template)?
        .into_iter()
        .filter(|n| !values.contains_key(n.as_str()))
        .collect();
    if !missing.is_empty() {
        return Err(AgentError::Template(format!("unsupplied placeholders: {}", missing.join(", "))));
    }
    let mut out = String::with_capacity(template.len());
    scan(template, |piece| match piece {
        Piece::Text(t) => out.push_str(t),
        Piece::Name(n) => out.push_str(&values[n]),
    })?;
    Ok(out)
}

enum Piece<'a> {
    Text(&'a str),
    Name(&'a str),
}

fn scan<'a>(template: &'a str, mut emit: impl FnMut(Piece<'a>)) -> AgentResult<()> {
    let bytes = template.as_bytes();
    let mut i = 0;
    let mut start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                emit(Piece::Text(&template[start..i + 1]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                emit(Piece::Text(&template[start..i + 1]));
                i += 2;
                start = i;
            }
            b'{' => {
                emit(Piece::Text(&template[start..i]));
                let end = template[i..]
                    .find('}')
                    .map(|e| i + e)
                    .ok_or_else(|| AgentError::Template(format!("unclosed brace at byte {i}")))?;
                let name = &template[i + 1..end];
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(AgentError::Template(format!("bad placeholder {{{name}}}")));
                }
                emit(Piece::Name(name));
                i = end + 1;
                start = i;
            }
            b'}' => return Err(AgentError::Template(format!("stray closing brace at byte {i}"))),
            _ => i += 1,
        }
    }
    emit(Piece::Text(&template[start..]));
    Ok(())
}
