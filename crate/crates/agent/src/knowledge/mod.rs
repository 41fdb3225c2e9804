//! Dual-channel knowledge: notes extracted from reasoning text, a rule-based
//! verifier, and a store pairing a cosine vector index with a triple graph.

mod embed;
mod notes;
mod store;

pub use embed::{cosine, norm, tokens, Embedder, HashedBowEmbedder};
pub use notes::{
    parse_note_text, parse_triple, verify_note, KnowledgeTriple, NoteRecord, NoteSource, ParsedNote, RejectedTriple,
    VerificationReport,
};
pub use store::{render_knowledge, KnowledgeStore, Passage, QueryResult, StoredNote, VectorEntry, TRUNCATION_MARKER};
