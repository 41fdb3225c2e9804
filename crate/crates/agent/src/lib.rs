//! Reasoning layer on top of `lodestar-core`: chat backends, prompt
//! templates, the knowledge store, and the campaign engine with its event
//! log.

pub mod backend;
pub mod engine;
pub mod error;
pub mod events;
pub mod knowledge;
pub mod prompts;
pub mod reasoning;

pub use backend::{ChatBackend, OpenAiBackend, ScriptedBackend, Transcript};
pub use engine::{Campaign, CampaignSnapshot, Llm, Suggestion, TrajectoryPoint};
pub use error::{AgentError, AgentResult};
pub use events::{CampaignConfig, CampaignEvent, Clock, EventPayload, EventSink, JsonlSink, NullSink};
pub use prompts::{Phase, PromptBundle};
