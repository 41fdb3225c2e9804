use serde::{Deserialize, Serialize};

use lodestar_core::space::{ParameterKind, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoteSource {
    Compass,
    Reasoning,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    /// Id of the note the triple came from.
    pub provenance: String,
}

impl KnowledgeTriple {
    pub fn new(subject: &str, relation: &str, object: &str, provenance: &str) -> Self {
        KnowledgeTriple {
            subject: subject.to_string(),
            relation: relation.to_string(),
            object: object.to_string(),
            provenance: provenance.to_string(),
        }
    }

    /// Same statement, ignoring case and provenance.
    pub fn same_fact(&self, other: &KnowledgeTriple) -> bool {
        self.subject.eq_ignore_ascii_case(&other.subject)
            && self.relation.eq_ignore_ascii_case(&other.relation)
            && self.object.eq_ignore_ascii_case(&other.object)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (part, text) in [("subject", &self.subject), ("relation", &self.relation), ("object", &self.object)] {
            if text.trim().is_empty() {
                out.push(format!("{part} empty"));
            }
        }
        if self.relation.chars().any(char::is_whitespace) {
            out.push(format!("relation {:?} contains whitespace", self.relation));
        }
        out
    }
}

impl std::fmt::Display for KnowledgeTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub id: String,
    pub source: NoteSource,
    #[serde(default)]
    pub key_findings: String,
    #[serde(default)]
    pub parameter_relationships: String,
    #[serde(default)]
    pub optimization_principles: String,
    #[serde(default)]
    pub general_notes: String,
    #[serde(default)]
    pub triples: Vec<KnowledgeTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
}

impl NoteRecord {
    pub fn empty(id: &str, source: NoteSource, round: Option<usize>) -> Self {
        NoteRecord {
            id: id.to_string(),
            source,
            key_findings: String::new(),
            parameter_relationships: String::new(),
            optimization_principles: String::new(),
            general_notes: String::new(),
            triples: Vec::new(),
            round,
        }
    }

    /// (section name, text) for every non-empty section.
    pub fn sections(&self) -> Vec<(&'static str, &str)> {
        [
            ("key_findings", self.key_findings.as_str()),
            ("parameter_relationships", self.parameter_relationships.as_str()),
            ("optimization_principles", self.optimization_principles.as_str()),
            ("general_notes", self.general_notes.as_str()),
        ]
        .into_iter()
        .filter(|(_, t)| !t.trim().is_empty())
        .collect()
    }

    pub fn has_content(&self) -> bool {
        !self.sections().is_empty() || !self.triples.is_empty()
    }
}

/// Outcome of parsing note text: the note plus one audit line per dropped
/// triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNote {
    pub note: NoteRecord,
    pub audit: Vec<String>,
}

#[derive(Clone, Copy)]
enum Section {
    KeyFindings,
    Relationships,
    Principles,
    General,
    Triples,
}

fn heading(line: &str) -> Option<(Section, &str)> {
    let (head, rest) = line.split_once(':')?;
    let head = head.trim().to_ascii_lowercase();
    let section = match head.as_str() {
        "key findings" => Section::KeyFindings,
        "parameter relationships" => Section::Relationships,
        "optimization principles" => Section::Principles,
        "general notes" => Section::General,
        "knowledge triples" | "created knowledge triples" | "triples" => Section::Triples,
        _ => return None,
    };
    Some((section, rest.trim()))
}

/// Parses one `(subject, Relation, object)` line.
pub fn parse_triple(line: &str, provenance: &str) -> Result<KnowledgeTriple, String> {
    let inner = line
        .trim()
        .strip_prefix('(')
        .and_then(|l| l.strip_suffix(')'))
        .ok_or_else(|| format!("not parenthesized: {line}"))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected 3 parts, found {}: {line}", parts.len()));
    }
    let triple = KnowledgeTriple::new(parts[0], parts[1], parts[2], provenance);
    let problems = triple.violations();
    if problems.is_empty() {
        Ok(triple)
    } else {
        Err(format!("{}: {line}", problems.join("; ")))
    }
}

fn is_triple_line(line: &str) -> bool {
    let t = line.trim();
    t.starts_with('(') && t.ends_with(')')
}

/// Parses heading-structured note text. Triples are read from any line of
/// the form `(s, R, o)`; malformed ones are dropped and audited.
pub fn parse_note_text(text: &str, id: &str, source: NoteSource, round: Option<usize>) -> ParsedNote {
    let mut note = NoteRecord::empty(id, source, round);
    let mut audit = Vec::new();
    let mut current: Option<Section> = None;
    for line in text.lines() {
        if is_triple_line(line) {
            match parse_triple(line, id) {
                Ok(t) => note.triples.push(t),
                Err(e) => audit.push(format!("dropped triple: {e}")),
            }
            continue;
        }
        let rest = match heading(line) {
            Some((section, rest)) => {
                current = Some(section);
                rest
            }
            None => line.trim(),
        };
        if rest.is_empty() {
            continue;
        }
        let target = match current {
            Some(Section::KeyFindings) => &mut note.key_findings,
            Some(Section::Relationships) => &mut note.parameter_relationships,
            Some(Section::Principles) => &mut note.optimization_principles,
            Some(Section::General) => &mut note.general_notes,
            Some(Section::Triples) | None => continue,
        };
        if !target.is_empty() {
            target.push(' ');
        }
        target.push_str(rest);
    }
    ParsedNote { note, audit }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedTriple {
    pub triple: KnowledgeTriple,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub accepted: Vec<KnowledgeTriple>,
    pub rejected: Vec<RejectedTriple>,
}

fn space_terms(space: &SearchSpace) -> Vec<String> {
    let mut terms = Vec::new();
    for p in &space.parameters {
        terms.push(p.name.to_lowercase());
        match &p.kind {
            ParameterKind::Categorical { choices } => terms.extend(choices.iter().map(|c| c.to_lowercase())),
            ParameterKind::Ordinal { choices } => terms.extend(choices.iter().map(|c| c.to_string())),
            ParameterKind::Continuous { .. } => {}
        }
    }
    terms
}

/// Case-insensitive substring match in either direction. Terms shorter than
/// three characters only match exactly, so a choice like "A" does not match
/// every entity containing that letter.
fn matches_term(entity: &str, term: &str) -> bool {
    let entity = entity.trim().to_lowercase();
    if entity.is_empty() || term.is_empty() {
        return false;
    }
    if entity == term {
        return true;
    }
    if term.chars().count() < 3 {
        return false;
    }
    entity.contains(term) || (entity.chars().count() >= 3 && term.contains(&entity))
}

/// Rule layer of note verification: a triple is kept when its subject or
/// object names a parameter or choice of `space` (or is whitelisted) and it
/// is not already known.
pub fn verify_note(note: &NoteRecord, space: &SearchSpace, whitelist: &[String], known: &[KnowledgeTriple]) -> VerificationReport {
    let terms = space_terms(space);
    let allowed: Vec<String> = whitelist.iter().map(|w| w.to_lowercase()).collect();
    let mut report = VerificationReport::default();
    for t in &note.triples {
        let grounded = [&t.subject, &t.object].iter().any(|e| {
            terms.iter().any(|term| matches_term(e, term)) || allowed.iter().any(|w| w == &e.trim().to_lowercase())
        });
        let reason = if !t.violations().is_empty() {
            Some(format!("malformed: {}", t.violations().join("; ")))
        } else if !grounded {
            Some("no entity matches the search space or whitelist".to_string())
        } else if known.iter().chain(&report.accepted).any(|k| k.same_fact(t)) {
            Some("redundant: already stored".to_string())
        } else {
            None
        };
        match reason {
            Some(reason) => report.rejected.push(RejectedTriple {
                triple: t.clone(),
                reason,
            }),
            None => report.accepted.push(t.clone()),
        }
    }
    report
}
