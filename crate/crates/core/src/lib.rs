//! Runtime for role-playing language agents.
//!
//! Characters keep a working memory, a long-term store of episodic and
//! question-answer records, and a knowledge base of logic clauses. Each turn they
//! observe a text world, recall through self-questioning, decide through a
//! pipeline of units and act through verified action scripts. Every model call
//! goes through [`LlmBridge`], which can replay a scripted transcript.

pub mod action;
pub mod cognition;
pub mod decision;
pub mod embed;
pub mod llm;
pub mod logicql;
pub mod ltm;
pub mod memory;
pub mod persona;
pub mod runtime;
pub mod working_memory;
pub mod world;

mod hex;

pub type Tick = u64;

pub use action::{SkillEntry, SkillLibrary, SkillScript, VerificationReport};
pub use cognition::Cognition;
pub use decision::{ConflictVerdict, Decision, DecisionEngine};
pub use embed::{cosine, EmbeddingProvider, TrigramEmbedder};
pub use llm::{ChatRequest, ChatResponse, LlmBridge, Role};
pub use logicql::{Atom, Clause, KnowledgeBase, QueryResult};
pub use ltm::{DecayParams, MemoryRecord, MemoryStore};
pub use memory::Memory;
pub use persona::Persona;
pub use runtime::{Scenario, Session};
pub use working_memory::{WorkingMemory, WorkingMemoryConfig, WorkingMemoryEntry};
pub use world::{Observation, WorldState};
