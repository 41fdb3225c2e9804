use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, norm, Embedder, HashedBowEmbedder};
use super::notes::{KnowledgeTriple, NoteRecord};
use crate::error::{AgentError, AgentResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEntry {
    /// `<note id>/<section>`.
    pub id: String,
    pub text: String,
    pub embedding: Vec<f64>,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub triples: Vec<KnowledgeTriple>,
    pub passages: Vec<Passage>,
}

impl QueryResult {
    pub fn is_empty(&self) -> bool {
        self.triples.is_empty() && self.passages.is_empty()
    }
}

/// One line of the store's JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredNote {
    pub note: NoteRecord,
    pub accepted: Vec<KnowledgeTriple>,
}

/// Vector index plus triple graph, optionally backed by an append-only
/// JSONL file that is replayed on open.
pub struct KnowledgeStore {
    embedder: Arc<dyn Embedder>,
    notes: Vec<NoteRecord>,
    entries: Vec<VectorEntry>,
    triples: Vec<KnowledgeTriple>,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for KnowledgeStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeStore")
            .field("notes", &self.notes.len())
            .field("entries", &self.entries.len())
            .field("triples", &self.triples.len())
            .field("path", &self.path)
            .finish()
    }
}

impl Default for KnowledgeStore {
    fn default() -> Self {
        Self::in_memory(Arc::new(HashedBowEmbedder::default()))
    }
}

impl KnowledgeStore {
    pub fn in_memory(embedder: Arc<dyn Embedder>) -> Self {
        KnowledgeStore {
            embedder,
            notes: Vec::new(),
            entries: Vec::new(),
            triples: Vec::new(),
            path: None,
        }
    }

    /// Opens (creating if absent) a persistent store and replays its log.
    pub fn open(path: &Path, embedder: Arc<dyn Embedder>) -> AgentResult<Self> {
        let mut store = Self::in_memory(embedder);
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let stored: StoredNote = serde_json::from_str(&line)
                    .map_err(|e| AgentError::Parse(format!("{} line {}: {e}", path.display(), i + 1)))?;
                store.apply(stored.note, stored.accepted);
            }
        }
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn notes(&self) -> &[NoteRecord] {
        &self.notes
    }

    pub fn entries(&self) -> &[VectorEntry] {
        &self.entries
    }

    pub fn triples(&self) -> &[KnowledgeTriple] {
        &self.triples
    }

    pub fn next_note_id(&self) -> String {
        format!("n{:04}", self.notes.len())
    }

    /// Embeds each non-empty section and adds the accepted triples. With a
    /// backing file the line is written first; on I/O failure nothing
    /// changes in memory.
    pub fn store_note(&mut self, note: NoteRecord, accepted: Vec<KnowledgeTriple>) -> AgentResult<()> {
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&StoredNote {
                note: note.clone(),
                accepted: accepted.clone(),
            })
            .expect("note serializes");
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            file.write_all(format!("{line}\n").as_bytes())?;
            file.flush()?;
        }
        self.apply(note, accepted);
        Ok(())
    }

    fn apply(&mut self, note: NoteRecord, accepted: Vec<KnowledgeTriple>) {
        for (section, text) in note.sections() {
            let embedding = self.embedder.embed(text);
            let n = norm(&embedding);
            self.entries.push(VectorEntry {
                id: format!("{}/{}", note.id, section),
                text: text.to_string(),
                embedding,
                norm: n,
            });
        }
        self.triples.extend(accepted);
        self.notes.push(note);
    }

    /// Graph phase then vector phase. Triples come back in insertion order;
    /// passages by similarity descending, then id.
    pub fn query_keywords(&self, keywords: &[String], k: usize, depth: usize) -> AgentResult<QueryResult> {
        if k == 0 || !(1..=2).contains(&depth) {
            return Err(AgentError::Core(lodestar_core::Error::Config(format!(
                "query needs k >= 1 and depth in {{1, 2}} (k {k}, depth {depth})"
            ))));
        }
        let words: Vec<String> = keywords
            .iter()
            .map(|w| w.trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Ok(QueryResult::default());
        }
        let mut hit: Vec<bool> = self
            .triples
            .iter()
            .map(|t| {
                let (s, o) = (t.subject.to_lowercase(), t.object.to_lowercase());
                words.iter().any(|w| s.contains(w.as_str()) || o.contains(w.as_str()))
            })
            .collect();
        if depth == 2 {
            let entities: Vec<String> = self
                .triples
                .iter()
                .zip(&hit)
                .filter(|(_, h)| **h)
                .flat_map(|(t, _)| [t.subject.to_lowercase(), t.object.to_lowercase()])
                .collect();
            for (t, h) in self.triples.iter().zip(hit.iter_mut()) {
                if !*h {
                    let (s, o) = (t.subject.to_lowercase(), t.object.to_lowercase());
                    *h = entities.iter().any(|e| *e == s || *e == o);
                }
            }
        }
        let triples = self
            .triples
            .iter()
            .zip(&hit)
            .filter(|(_, h)| **h)
            .map(|(t, _)| t.clone())
            .collect();

        let query = self.embedder.embed(&words.join(" "));
        let qn = norm(&query);
        let mut passages: Vec<Passage> = if qn == 0.0 {
            Vec::new()
        } else {
            self.entries
                .iter()
                .map(|e| Passage {
                    id: e.id.clone(),
                    text: e.text.clone(),
                    similarity: cosine(&query, qn, &e.embedding, e.norm),
                })
                .collect()
        };
        passages.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.id.cmp(&b.id)));
        passages.truncate(k);
        Ok(QueryResult { triples, passages })
    }
}

pub const TRUNCATION_MARKER: &str = "\n[truncated]";

/// Prompt-ready text: triples as `(s, R, o)` lines, then passages with
/// their similarity. Output longer than `budget` characters is cut and
/// marked.
pub fn render_knowledge(result: &QueryResult, budget: usize) -> String {
    if result.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    if !result.triples.is_empty() {
        out.push_str("Knowledge graph:\n");
        for t in &result.triples {
            out.push_str(&format!("{t}\n"));
        }
    }
    if !result.passages.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("Related notes:\n");
        for p in &result.passages {
            out.push_str(&format!("[{:.3}] {}\n", p.similarity, p.text));
        }
    }
    if out.chars().count() > budget {
        let cut: String = out.chars().take(budget).collect();
        return cut + TRUNCATION_MARKER;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::notes::NoteSource;

    fn note(id: &str, findings: &str, general: &str, triples: &[(&str, &str, &str)]) -> NoteRecord {
        let mut n = NoteRecord::empty(id, NoteSource::Manual, None);
        n.key_findings = findings.to_string();
        n.general_notes = general.to_string();
        n.triples = triples.iter().map(|(s, r, o)| KnowledgeTriple::new(s, r, o, id)).collect();
        n
    }

    #[test]
    fn counting_contract() {
        let mut store = KnowledgeStore::default();
        let n = note("n0", "alpha", "beta", &[("A", "R", "B"), ("B", "R", "C"), ("C", "R", "D")]);
        let triples = n.triples.clone();
        store.store_note(n, triples).unwrap();
        assert_eq!(store.entries().len(), 2);
        assert_eq!(store.triples().len(), 3);
        let n = note("n1", "", "", &[("E", "R", "F")]);
        let triples = n.triples.clone();
        store.store_note(n, triples).unwrap();
        assert_eq!(store.entries().len(), 2);
        assert_eq!(store.triples().len(), 4);
    }

    #[test]
    fn depth_two_follows_shared_entities() {
        let mut store = KnowledgeStore::default();
        let n = note("n0", "", "", &[("A", "R1", "B"), ("B", "R2", "C"), ("X", "R3", "Y")]);
        let triples = n.triples.clone();
        store.store_note(n, triples).unwrap();
        let one = store.query_keywords(&["a".into()], 3, 1).unwrap();
        assert_eq!(one.triples.len(), 1);
        let two = store.query_keywords(&["A".into()], 3, 2).unwrap();
        assert_eq!(two.triples.len(), 2);
        assert!(store.query_keywords(&["A".into()], 3, 3).is_err());
        assert!(store.query_keywords(&[], 3, 1).unwrap().is_empty());
    }

    #[test]
    fn identical_text_ranks_first_with_unit_similarity() {
        let mut store = KnowledgeStore::default();
        store.store_note(note("n0", "ligand screening was noisy", "", &[]), vec![]).unwrap();
        store.store_note(note("n1", "cesium fluoride base works", "", &[]), vec![]).unwrap();
        let r = store.query_keywords(&["cesium fluoride base works".into()], 2, 1).unwrap();
        assert_eq!(r.passages[0].id, "n1/key_findings");
        assert!((r.passages[0].similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rendering() {
        assert_eq!(render_knowledge(&QueryResult::default(), 100), "");
        let r = QueryResult {
            triples: vec![KnowledgeTriple::new("A", "R", "B", "n0")],
            passages: vec![Passage {
                id: "n0/key_findings".into(),
                text: "alpha".into(),
                similarity: 0.5,
            }],
        };
        let text = render_knowledge(&r, 1000);
        assert_eq!(text, "Knowledge graph:\n(A, R, B)\n\nRelated notes:\n[0.500] alpha\n");
        assert_eq!(render_knowledge(&r, 1000), text);
        let short = render_knowledge(&r, 10);
        assert_eq!(short, format!("Knowledge {TRUNCATION_MARKER}"));
    }

    #[test]
    fn failed_write_leaves_memory_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("store.jsonl");
        let mut store = KnowledgeStore::in_memory(Arc::new(HashedBowEmbedder::default()));
        store.path = Some(path);
        assert!(store.store_note(note("n0", "alpha", "", &[]), vec![]).is_err());
        assert!(store.notes().is_empty());
        assert!(store.entries().is_empty());
    }
}
