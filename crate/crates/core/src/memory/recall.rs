//! Self-ask driven recall over three retrieval channels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{Memory, MemoryError};
use crate::cognition::{numbered_items, Cognition};
use crate::llm::{LlmError, Role};
use crate::logicql::{parse_query, QueryResult};
use crate::ltm::{forget_filter, rank_order, MemoryKind, Scored};
use crate::Tick;

/// Answer returned when there is nothing to ask about.
pub const NO_MEMORY_ANSWER: &str = "I don't recall anything about this.";
const FINAL_SENTINEL: &str = "FINAL:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfAskQuestion {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalBundle {
    pub question: SelfAskQuestion,
    pub logic_query: Option<String>,
    /// Why the logic channel produced nothing, if it failed.
    pub logic_error: Option<String>,
    #[serde(serialize_with = "displayed")]
    pub logic_results: Vec<QueryResult>,
    pub keywords: Vec<String>,
    #[serde(serialize_with = "scored_ids")]
    pub keyword_results: Vec<Scored>,
    #[serde(serialize_with = "scored_ids")]
    pub qa_results: Vec<Scored>,
    /// Merged episodic candidates removed by forgetting.
    pub forgotten: Vec<u64>,
    /// Merged episodic candidates that survived, as they were after being touched.
    #[serde(serialize_with = "scored_ids")]
    pub surviving: Vec<Scored>,
}

impl RetrievalBundle {
    /// Evidence text for the answering prompt.
    pub fn render(&self) -> String {
        let mut out = format!("Q{}: {}\n", self.question.index + 1, self.question.text);
        for r in &self.logic_results {
            out.push_str(&format!(
                "- fact: {} {r}\n",
                self.logic_query.as_deref().unwrap_or("")
            ));
        }
        for s in &self.surviving {
            match &s.record.question {
                Some(q) => out.push_str(&format!("- memory: Q: {q} A: {}\n", s.record.content)),
                None => out.push_str(&format!("- memory: {}\n", s.record.content)),
            }
        }
        if self.logic_results.is_empty() && self.surviving.is_empty() {
            out.push_str("- nothing recalled\n");
        }
        out
    }
}

/// Scored hits as `[id, score]` pairs.
fn scored_ids<S: serde::Serializer>(hits: &[Scored], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(hits.iter().map(|h| (h.record.id, h.score)))
}

fn displayed<S: serde::Serializer>(results: &[QueryResult], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(results.iter().map(|r| r.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalAnswer,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallResult {
    pub answer: String,
    pub supporting_record_ids: Vec<u64>,
    pub iterations: u32,
    pub terminated_by: Termination,
    pub bundles: Vec<RetrievalBundle>,
    /// Reconstructed child records created by this recall.
    pub reconstructed: Vec<u64>,
}

impl Memory {
    pub fn self_ask(
        &self,
        cog: &Cognition,
        observation: &str,
        context: &str,
    ) -> Result<Vec<SelfAskQuestion>, LlmError> {
        let max = self.config.max_questions.to_string();
        let context = if context.is_empty() { "none" } else { context };
        let reply = cog.ask(
            Role::SelfAsk,
            &[
                ("max_questions", &max),
                ("observation", observation),
                ("context", context),
            ],
        )?;
        Ok(numbered_items(&reply)
            .into_iter()
            .take(self.config.max_questions)
            .enumerate()
            .map(|(index, text)| SelfAskQuestion { index, text })
            .collect())
    }

    /// Runs the logic, keyword and question channels for one question, applies
    /// forgetting to the merged episodic hits and touches the survivors.
    pub fn compound_retrieve(
        &mut self,
        cog: &Cognition,
        question: &SelfAskQuestion,
        now: Tick,
    ) -> Result<RetrievalBundle, MemoryError> {
        let character = cog.persona.id.as_str();
        let k = self.config.channel_k;

        let predicates: Vec<String> = self
            .kb
            .signature()
            .iter()
            .map(|(p, n)| format!("{p}/{n}"))
            .collect();
        let predicates = if predicates.is_empty() {
            "none".to_string()
        } else {
            predicates.join(", ")
        };
        let reply = cog.ask(
            Role::LogicGen,
            &[("question", &question.text), ("predicates", &predicates)],
        )?;
        let logic_query = reply.trim().lines().next().unwrap_or("").trim().to_string();
        let (logic_results, logic_error) = match parse_query(&logic_query) {
            Ok(atom) => match self.kb.query(&atom) {
                Ok(results) => (results, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            },
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        if let Some(e) = &logic_error {
            warn!(
                query = logic_query.as_str(),
                error = e.as_str(),
                "logic channel degraded"
            );
        }

        let reply = cog.ask(Role::KeywordExtract, &[("question", &question.text)])?;
        let keywords: Vec<String> = reply
            .split([',', '\n'])
            .map(|k| k.trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        let keyword_results = self.ltm.keyword_search(&keywords, character, k);
        let qa_results = self.ltm.qa_search(&question.text, character, k);

        // keyword scores are counts; scale them into [0, 1] before merging
        let distinct: BTreeSet<&String> = keywords.iter().collect();
        let scale = distinct.len().max(1) as f64;
        let mut merged: BTreeMap<u64, Scored> = BTreeMap::new();
        let normalized = keyword_results.iter().map(|s| Scored {
            record: s.record.clone(),
            score: s.score / scale,
        });
        for hit in normalized.chain(qa_results.iter().cloned()) {
            match merged.get_mut(&hit.record.id) {
                Some(existing) if existing.score >= hit.score => {}
                _ => {
                    merged.insert(hit.record.id, hit);
                }
            }
        }
        let mut candidates: Vec<Scored> = merged.into_values().collect();
        candidates.sort_by(rank_order);

        let ids: Vec<u64> = candidates.iter().map(|s| s.record.id).collect();
        let survivors = forget_filter(
            candidates.into_iter().map(ScoredRef).collect(),
            now,
            &cog.persona.decay,
            &mut self.sampler,
        );
        let mut surviving = Vec::new();
        for ScoredRef(mut s) in survivors {
            s.record = self.ltm.touch(s.record.id, now)?.clone();
            surviving.push(s);
        }
        let forgotten = ids
            .into_iter()
            .filter(|id| !surviving.iter().any(|s| s.record.id == *id))
            .collect();
        Ok(RetrievalBundle {
            question: question.clone(),
            logic_query: Some(logic_query).filter(|q| !q.is_empty()),
            logic_error,
            logic_results,
            keywords,
            keyword_results,
            qa_results,
            forgotten,
            surviving,
        })
    }

    /// Asks, retrieves and reasons until an answer starts with `FINAL:` or the
    /// iteration cap is reached.
    pub fn recall_loop(
        &mut self,
        cog: &Cognition,
        observation: &str,
        now: Tick,
    ) -> Result<RecallResult, MemoryError> {
        let mut context = String::new();
        let mut bundles = Vec::new();
        let mut last_reply: Option<String> = None;
        let mut iterations = 0;
        let mut terminated_by = Termination::IterationCap;
        let mut answer = String::new();

        while iterations < self.config.max_iterations {
            iterations += 1;
            let questions = self.self_ask(cog, observation, &context)?;
            if questions.is_empty() {
                debug!(iterations, "self-ask produced no questions");
                answer = last_reply
                    .clone()
                    .unwrap_or_else(|| NO_MEMORY_ANSWER.to_string());
                terminated_by = Termination::FinalAnswer;
                break;
            }
            let mut evidence = String::new();
            for q in &questions {
                let bundle = self.compound_retrieve(cog, q, now)?;
                evidence.push_str(&bundle.render());
                bundles.push(bundle);
            }
            let prior = if context.is_empty() {
                "none"
            } else {
                context.as_str()
            };
            let reply = cog.ask(
                Role::CotAnswer,
                &[
                    ("observation", observation),
                    ("evidence", evidence.trim_end()),
                    ("context", prior),
                ],
            )?;
            if let Some(rest) = reply.trim_start().strip_prefix(FINAL_SENTINEL) {
                answer = rest.trim().to_string();
                terminated_by = Termination::FinalAnswer;
                break;
            }
            answer = reply.trim().to_string();
            if !context.is_empty() {
                context.push('\n');
            }
            context.push_str(reply.trim());
            last_reply = Some(reply.trim().to_string());
        }

        let supporting: BTreeSet<u64> = bundles
            .iter()
            .flat_map(|b| b.surviving.iter().map(|s| s.record.id))
            .collect();
        let mut reconstructed = Vec::new();
        if self.config.reconstruction {
            let best = bundles
                .iter()
                .flat_map(|b| b.surviving.iter())
                .filter(|s| s.record.kind == MemoryKind::EpisodicNl)
                .min_by(|a, b| rank_order(a, b))
                .map(|s| s.record.id);
            if let Some(id) = best {
                reconstructed.extend(self.reconstruct_memory(cog, id, &answer, now)?);
            }
        }
        Ok(RecallResult {
            answer,
            supporting_record_ids: supporting.into_iter().collect(),
            iterations,
            terminated_by,
            bundles,
            reconstructed,
        })
    }

    /// Appends a persona-coloured rewrite of an episodic record; an empty rewrite
    /// stores nothing.
    pub fn reconstruct_memory(
        &mut self,
        cog: &Cognition,
        record_id: u64,
        context: &str,
        now: Tick,
    ) -> Result<Option<u64>, MemoryError> {
        let record = self
            .ltm
            .get(record_id)
            .ok_or(crate::ltm::LtmError::UnknownId(record_id))?
            .clone();
        let reply = cog.ask(
            Role::Reconstruct,
            &[("memory", &record.content), ("context", context)],
        )?;
        let text = reply.trim();
        if text.is_empty() {
            return Ok(None);
        }
        Ok(Some(self.ltm.store_reconstruction(record_id, text, now)?))
    }
}

struct ScoredRef(Scored);

impl std::borrow::Borrow<crate::ltm::MemoryRecord> for ScoredRef {
    fn borrow(&self) -> &crate::ltm::MemoryRecord {
        &self.0.record
    }
}
