//! Encoding observations, consolidating working memory into long-term stores and
//! recalling from them.

mod recall;
mod reflect;

use serde::{Deserialize, Serialize};
use tracing::warn;

pub use recall::{RecallResult, RetrievalBundle, SelfAskQuestion, Termination, NO_MEMORY_ANSWER};
pub use reflect::{
    parse_reflection, ReflectionItem, ReflectionLine, ReflectionOutcome, ReflectionReport,
};

use crate::cognition::Cognition;
use crate::llm::{LlmError, Role};
use crate::logicql::KnowledgeBase;
use crate::ltm::{ForgetSampler, LtmError, MemoryStore, NewRecord};
use crate::working_memory::{Producer, WorkingMemory, WorkingMemoryConfig, WorkingMemoryEntry};
use crate::world::{short_digest, Observation};
use crate::Tick;

/// Salience used when the importance reply cannot be read.
pub const FALLBACK_SALIENCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryConfig {
    /// Entries below this salience are discarded by reflection.
    pub min_salience: f64,
    pub max_questions: usize,
    pub max_iterations: u32,
    /// Results taken from each retrieval channel.
    pub channel_k: usize,
    /// Rewrite the best recalled episodic memory after each recall.
    pub reconstruction: bool,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            min_salience: 0.2,
            max_questions: 5,
            max_iterations: 3,
            channel_k: 5,
            reconstruction: false,
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.min_salience) {
            return Err(format!(
                "min_salience must lie in [0, 1], got {}",
                self.min_salience
            ));
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Ltm(#[from] LtmError),
}

/// Reads an importance reply: a number in `[0, 10]` mapped to `[0, 1]`.
pub fn parse_importance(reply: &str) -> Option<f64> {
    let token = reply.split_whitespace().next()?;
    let token = token.trim_end_matches(['.', ',', '/', ')']);
    let value: f64 = token.parse().ok()?;
    (value.is_finite() && (0.0..=10.0).contains(&value)).then_some(value / 10.0)
}

/// Reads `Q: ...` / `A: ...` line pairs.
pub fn parse_qa_pairs(reply: &str) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let mut question: Option<String> = None;
    for line in reply.lines().map(str::trim) {
        if let Some(q) = line.strip_prefix("Q:") {
            question = Some(q.trim().to_string()).filter(|q| !q.is_empty());
        } else if let Some(a) = line.strip_prefix("A:") {
            let a = a.trim();
            if let (Some(q), false) = (question.take(), a.is_empty()) {
                pairs.push((q, a.to_string()));
            }
        }
    }
    pairs
}

/// One encoded observation item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoded {
    pub key: String,
    pub text: String,
    pub salience: f64,
    /// False when the importance reply was unusable and the fallback was applied.
    pub scored: bool,
}

/// A character's memory: long-term store, knowledge base, working memory and the
/// forgetting sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    pub ltm: MemoryStore,
    pub kb: KnowledgeBase,
    pub wm: WorkingMemory,
    pub sampler: ForgetSampler,
    pub config: MemoryConfig,
}

impl Memory {
    pub fn new(wm_config: WorkingMemoryConfig, config: MemoryConfig, seed: u64) -> Self {
        Self {
            ltm: MemoryStore::new(),
            kb: KnowledgeBase::new(),
            wm: WorkingMemory::new(wm_config),
            sampler: ForgetSampler::new(seed),
            config,
        }
    }

    /// Scores each observation item and puts it into working memory under a key
    /// derived from its text, so a repeated sighting refreshes the same entry.
    pub fn encode_observation(
        &mut self,
        cog: &Cognition,
        observation: &Observation,
    ) -> Result<Vec<Encoded>, LlmError> {
        let mut out = Vec::new();
        for item in &observation.items {
            let text = item.to_string();
            let reply = cog.ask(Role::Importance, &[("item", &text)])?;
            let (salience, scored) = match parse_importance(&reply) {
                Some(s) => (s, true),
                None => {
                    warn!(
                        reply = reply.as_str(),
                        "unreadable importance score, using fallback"
                    );
                    (FALLBACK_SALIENCE, false)
                }
            };
            let key = format!("obs:{}", short_digest(&text));
            self.wm.put(WorkingMemoryEntry::new(
                &key,
                &text,
                Producer::Perception,
                observation.tick,
                salience,
            ));
            out.push(Encoded {
                key,
                text,
                salience,
                scored,
            });
        }
        Ok(out)
    }

    /// Stores `content` as an episodic memory plus the QA pairs generated from it.
    /// Returns the ids of every record stored, the episodic one first.
    pub fn store_with_questions(
        &mut self,
        cog: &Cognition,
        content: &str,
        importance: f64,
        now: Tick,
        reflected: bool,
    ) -> Result<Vec<u64>, MemoryError> {
        let character = cog.persona.id.as_str();
        let mut new = NewRecord::episodic(character, content, importance, now);
        if reflected {
            new = new.reflected();
        }
        let mut ids = vec![self.ltm.store(new)?];
        let pairs = self.generate_qa_pairs(cog, content)?;
        if pairs.is_empty() {
            warn!(content, "no question-answer pairs parsed");
        }
        for (q, a) in pairs {
            let mut new = NewRecord::qa(character, q, a, importance, now);
            if reflected {
                new = new.reflected();
            }
            ids.push(self.ltm.store(new)?);
        }
        Ok(ids)
    }

    pub fn generate_qa_pairs(
        &self,
        cog: &Cognition,
        content: &str,
    ) -> Result<Vec<(String, String)>, LlmError> {
        let reply = cog.ask(Role::QaGen, &[("content", content)])?;
        Ok(parse_qa_pairs(&reply))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn importance_parsing() {
        assert_eq!(parse_importance("7"), Some(0.7));
        assert_eq!(parse_importance(" 10.\n"), Some(1.0));
        assert_eq!(parse_importance("banana"), None);
        assert_eq!(parse_importance("11"), None);
        assert_eq!(parse_importance(""), None);
    }

    #[test]
    fn qa_parsing() {
        assert_eq!(
            parse_qa_pairs("Q: where is the well?\nA: north of the mill"),
            [(
                "where is the well?".to_string(),
                "north of the mill".to_string()
            )]
        );
        assert!(parse_qa_pairs("the well is north").is_empty());
        assert_eq!(
            parse_qa_pairs("Q: a?\nA: b\nQ: c?\nA: d\nA: orphan").len(),
            2
        );
    }
}
