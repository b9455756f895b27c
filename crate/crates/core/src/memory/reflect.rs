//! Consolidation of working memory into episodic and semantic memory.
//!
//! Reply grammar, one item per line, other lines ignored:
//!
//! ```text
//! [#<n>] MEMORY: <sentence>
//! [#<n>] FACT: <logic clause>
//! ```
//!
//! `n` is the 1-based position of the entry in the prompt. Each entry ends up in
//! exactly one outcome: filtered when its salience is below the minimum, otherwise
//! `stored_semantic_ok` if one of its facts was asserted, else `stored_episodic`
//! if it produced a memory, else `stored_semantic_dropped` if all its facts were
//! rejected. Entries the reply does not mention count as `stored_episodic`; their
//! raw text is stored when the reply contains no memory lines at all.

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{Memory, MemoryError};
use crate::cognition::Cognition;
use crate::llm::Role;
use crate::logicql::parse_program;
use crate::ltm::NewRecord;
use crate::working_memory::{Departure, WorkingMemoryEntry};
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionOutcome {
    Filtered,
    StoredEpisodic,
    StoredSemanticOk,
    StoredSemanticDropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionItem {
    pub key: String,
    pub value: String,
    pub salience: f64,
    /// How the entry left working memory before reflection, if it did.
    pub departed: Option<Departure>,
    pub outcome: ReflectionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionReport {
    pub items: Vec<ReflectionItem>,
    pub memories_stored: Vec<u64>,
    pub facts_asserted: Vec<String>,
    /// Rejected facts with the reason.
    pub facts_dropped: Vec<(String, String)>,
}

impl ReflectionReport {
    pub fn count(&self, outcome: ReflectionOutcome) -> usize {
        self.items.iter().filter(|i| i.outcome == outcome).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReflectionLine {
    Memory { entry: Option<usize>, text: String },
    Fact { entry: Option<usize>, text: String },
}

pub fn parse_reflection(reply: &str) -> Vec<ReflectionLine> {
    let mut out = Vec::new();
    for line in reply.lines().map(str::trim) {
        let (entry, rest) = match line.strip_prefix('#') {
            Some(tagged) => {
                let digits = tagged.len()
                    - tagged
                        .trim_start_matches(|c: char| c.is_ascii_digit())
                        .len();
                match tagged[..digits].parse::<usize>() {
                    Ok(n) => (Some(n), tagged[digits..].trim_start()),
                    Err(_) => continue,
                }
            }
            None => (None, line),
        };
        if let Some(text) = rest.strip_prefix("MEMORY:") {
            let text = text.trim();
            if !text.is_empty() {
                out.push(ReflectionLine::Memory {
                    entry,
                    text: text.into(),
                });
            }
        } else if let Some(text) = rest.strip_prefix("FACT:") {
            out.push(ReflectionLine::Fact {
                entry,
                text: text.trim().into(),
            });
        }
    }
    out
}

#[derive(Default, Clone, Copy)]
struct Marks {
    memory: bool,
    fact_ok: bool,
    fact_dropped: bool,
}

impl Memory {
    /// Consolidates everything in working memory, plus whatever was evicted or
    /// expired since the last reflection, and empties working memory.
    pub fn reflect(&mut self, cog: &Cognition, now: Tick) -> Result<ReflectionReport, MemoryError> {
        let mut pending: Vec<(WorkingMemoryEntry, Option<Departure>)> = self
            .wm
            .drain_departed()
            .into_iter()
            .map(|(d, e)| (e, Some(d)))
            .collect();
        pending.extend(self.wm.take_all().into_iter().map(|e| (e, None)));

        let min = self.config.min_salience;
        let kept: Vec<usize> = (0..pending.len())
            .filter(|&i| pending[i].0.salience >= min)
            .collect();
        let mut marks = vec![Marks::default(); pending.len()];
        let mut report = ReflectionReport {
            items: Vec::new(),
            memories_stored: Vec::new(),
            facts_asserted: Vec::new(),
            facts_dropped: Vec::new(),
        };

        if !kept.is_empty() {
            let listing: Vec<String> = kept
                .iter()
                .enumerate()
                .map(|(n, &i)| format!("#{} {}", n + 1, pending[i].0.value))
                .collect();
            let reply = cog.ask(Role::ReflectMemory, &[("entries", &listing.join("\n"))])?;
            let lines = parse_reflection(&reply);
            let mean_salience =
                kept.iter().map(|&i| pending[i].0.salience).sum::<f64>() / kept.len() as f64;
            // maps a `#n` tag to the index in `pending`
            let target = |entry: Option<usize>| {
                entry
                    .and_then(|n| n.checked_sub(1))
                    .and_then(|n| kept.get(n).copied())
            };
            let any_memory = lines
                .iter()
                .any(|l| matches!(l, ReflectionLine::Memory { .. }));

            for line in &lines {
                match line {
                    ReflectionLine::Memory { entry, text } => {
                        let owner = target(*entry);
                        let importance = owner.map_or(mean_salience, |i| pending[i].0.salience);
                        let ids = self.store_with_questions(cog, text, importance, now, true)?;
                        report.memories_stored.extend(ids);
                        if let Some(i) = owner {
                            marks[i].memory = true;
                        }
                    }
                    ReflectionLine::Fact { entry, text } => {
                        let owner = target(*entry);
                        match self.assert_fact(
                            cog,
                            text,
                            owner.map_or(mean_salience, |i| pending[i].0.salience),
                            now,
                        ) {
                            Ok(()) => {
                                report.facts_asserted.push(text.clone());
                                if let Some(i) = owner {
                                    marks[i].fact_ok = true;
                                }
                            }
                            Err(reason) => {
                                warn!(
                                    fact = text.as_str(),
                                    reason = reason.as_str(),
                                    "dropping reflected fact"
                                );
                                report.facts_dropped.push((text.clone(), reason));
                                if let Some(i) = owner {
                                    marks[i].fact_dropped = true;
                                }
                            }
                        }
                    }
                }
            }

            if !any_memory {
                for &i in &kept {
                    let m = marks[i];
                    if !m.fact_ok && !m.fact_dropped {
                        let entry = &pending[i].0;
                        let ids = self.store_with_questions(
                            cog,
                            &entry.value,
                            entry.salience,
                            now,
                            true,
                        )?;
                        report.memories_stored.extend(ids);
                    }
                }
            }
        }

        for (i, (entry, departed)) in pending.into_iter().enumerate() {
            let m = marks[i];
            let outcome = if entry.salience < min {
                ReflectionOutcome::Filtered
            } else if m.fact_ok {
                ReflectionOutcome::StoredSemanticOk
            } else if m.memory || !m.fact_dropped {
                ReflectionOutcome::StoredEpisodic
            } else {
                ReflectionOutcome::StoredSemanticDropped
            };
            report.items.push(ReflectionItem {
                key: entry.key,
                value: entry.value,
                salience: entry.salience,
                departed,
                outcome,
            });
        }
        Ok(report)
    }

    /// Parses a fact and asserts it into the knowledge base, also recording it as a
    /// semantic memory record.
    fn assert_fact(
        &mut self,
        cog: &Cognition,
        text: &str,
        importance: f64,
        now: Tick,
    ) -> Result<(), String> {
        let clauses = parse_program(text).map_err(|e| e.to_string())?;
        if clauses.is_empty() {
            return Err("no clause".into());
        }
        let mut trial = self.kb.clone();
        for clause in clauses {
            trial.assert_clause(clause).map_err(|e| e.to_string())?;
        }
        self.kb = trial;
        self.ltm
            .store(NewRecord::fact(&cog.persona.id, text, importance, now).reflected())
            .map_err(|e| e.to_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_grammar() {
        let lines = parse_reflection(
            "#1 MEMORY: met smith\nFACT: ally(npc1,npc2).\n#x FACT: bad\nnoise\n#12 FACT: q(a).",
        );
        assert_eq!(
            lines,
            [
                ReflectionLine::Memory {
                    entry: Some(1),
                    text: "met smith".into()
                },
                ReflectionLine::Fact {
                    entry: None,
                    text: "ally(npc1,npc2).".into()
                },
                ReflectionLine::Fact {
                    entry: Some(12),
                    text: "q(a).".into()
                },
            ]
        );
    }
}
