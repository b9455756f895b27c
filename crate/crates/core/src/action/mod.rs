//! Acting in the world: task decomposition, skill lookup, script generation with
//! verification and repair, caching of working scripts and training-pair logging.

pub mod dsl;
pub mod exec;
pub mod skills;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

pub use dsl::{parse_script, Call, ScriptError, SkillScript, Stmt};
pub use exec::{
    execute, verify, verify_text, ActionSpace, ExecutionReport, Stage, VerificationReport,
};
pub use skills::{
    RoundOutcome, SkillEntry, SkillLibrary, TrainingLog, TrainingPair, DEFAULT_SKILL_THRESHOLD,
};

use crate::cognition::{numbered_items, Cognition};
use crate::llm::{LlmError, Role};
use crate::working_memory::{Producer, WorkingMemory, WorkingMemoryEntry};
use crate::world::WorldState;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const TASK_FAILED_KEY: &str = "task_failed";

#[derive(Debug, Error)]
pub enum ActionError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ActionError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Splits a decomposition reply; `ATOMIC` or an unusable reply keeps the task whole.
pub fn parse_decomposition(task: &str, reply: &str) -> Vec<String> {
    if reply.trim().eq_ignore_ascii_case("atomic") {
        return vec![task.to_string()];
    }
    let items = numbered_items(reply);
    if items.is_empty() {
        warn!(task, "empty decomposition, treating task as atomic");
        return vec![task.to_string()];
    }
    items
}

pub fn decompose_task(
    cog: &Cognition,
    task: &str,
    wm: &WorkingMemory,
) -> Result<Vec<String>, LlmError> {
    let reply = cog.ask(
        Role::Decompose,
        &[("task", task), ("working_memory", &wm.dump())],
    )?;
    Ok(parse_decomposition(task, &reply))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum SubtaskSource {
    Cached { skill_id: u64, similarity: f64 },
    Generated { attempts: u32 },
}

/// One generate-verify(-execute) round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt: u32,
    pub role: Role,
    pub script_text: String,
    pub verification: VerificationReport,
    /// Set when a verified script failed on the live world.
    pub desync: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskReport {
    pub task: String,
    pub source: Option<SubtaskSource>,
    /// Failed reuse of a cached skill before falling back to generation.
    pub cache_failure: Option<String>,
    pub attempts: Vec<Attempt>,
    pub execution: Option<ExecutionReport>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub subtasks: Vec<String>,
    pub reports: Vec<SubtaskReport>,
    pub completed: bool,
}

/// Runs one task for `cog.persona` against the live world.
pub struct Interaction<'a> {
    pub cog: Cognition<'a>,
    pub max_attempts: u32,
}

impl<'a> Interaction<'a> {
    pub fn new(cog: Cognition<'a>) -> Self {
        Self {
            cog,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    fn character(&self) -> &str {
        &self.cog.persona.id
    }

    /// Decomposes `task` and performs the subtasks in order, stopping at the first
    /// one that cannot be completed.
    pub fn perform(
        &self,
        task: &str,
        wm: &mut WorkingMemory,
        world: &mut WorldState,
        library: &mut SkillLibrary,
        log: &mut TrainingLog,
    ) -> Result<TaskReport, ActionError> {
        let subtasks = decompose_task(&self.cog, task, wm)?;
        let mut reports = Vec::new();
        for subtask in &subtasks {
            let report = self.perform_subtask(subtask, wm, world, library, log)?;
            let ok = report.success;
            reports.push(report);
            if !ok {
                return Ok(TaskReport {
                    task: task.into(),
                    subtasks,
                    reports,
                    completed: false,
                });
            }
        }
        Ok(TaskReport {
            task: task.into(),
            subtasks,
            reports,
            completed: true,
        })
    }

    pub fn perform_subtask(
        &self,
        subtask: &str,
        wm: &mut WorkingMemory,
        world: &mut WorldState,
        library: &mut SkillLibrary,
        log: &mut TrainingLog,
    ) -> Result<SubtaskReport, ActionError> {
        let character = self.character().to_string();
        let mut report = SubtaskReport {
            task: subtask.into(),
            source: None,
            cache_failure: None,
            attempts: Vec::new(),
            execution: None,
            success: false,
        };

        if let Some((entry, similarity)) = library.lookup(subtask) {
            let (id, script) = (entry.id, entry.script.clone());
            let space = library.action_space();
            let check = verify(&script, &space, world, &character);
            if check.passed() {
                let run = execute(&script, &space, world, &character);
                if run.succeeded() {
                    debug!(subtask, skill = id, "cached skill reused");
                    library.record_success(id);
                    report.source = Some(SubtaskSource::Cached {
                        skill_id: id,
                        similarity,
                    });
                    report.execution = Some(run);
                    report.success = true;
                    return Ok(report);
                }
                report.cache_failure = Some(format!(
                    "skill_{id}: world desync: {}",
                    run.failure().unwrap()
                ));
                report.execution = Some(run);
            } else {
                report.cache_failure = Some(format!("skill_{id}: {check}"));
            }
            library.record_failure(id);
        }

        let mut previous: Option<(String, String)> = None;
        for attempt in 1..=self.max_attempts {
            let space = library.action_space();
            let listing = space.listing();
            let snapshot = wm.dump();
            let (role, vars): (Role, Vec<(&str, &str)>) = match &previous {
                None => (
                    Role::Codegen,
                    vec![
                        ("task", subtask),
                        ("apis", &listing),
                        ("working_memory", &snapshot),
                    ],
                ),
                Some((script, failure)) => (
                    Role::ReflectCode,
                    vec![
                        ("task", subtask),
                        ("script", script),
                        ("failure", failure),
                        ("apis", &listing),
                    ],
                ),
            };
            let prompt_text = self.cog.render_user(role, &vars);
            let text = self.cog.ask(role, &vars)?;
            let (script, verification) = verify_text(&text, &space, world, &character);
            let mut record = Attempt {
                attempt,
                role,
                script_text: text.clone(),
                verification,
                desync: None,
            };
            let mut outcome = RoundOutcome::Failed;
            let mut message = record.verification.message.clone();
            if let (Some(script), true) = (script, record.verification.passed()) {
                let run = execute(&script, &space, world, &character);
                if run.succeeded() {
                    outcome = RoundOutcome::Succeeded;
                    library.cache_skill(subtask, script, world.clock());
                } else {
                    message = format!("world desync: {}", run.failure().unwrap());
                    record.desync = Some(message.clone());
                }
                report.execution = Some(run);
            }
            log.append(TrainingPair {
                character: character.clone(),
                task: subtask.into(),
                role: role.to_string(),
                attempt,
                prompt_text,
                generated_script_text: text.clone(),
                outcome,
                failure_stage: record.verification.failure_stage,
                message: message.clone(),
                timestamp: world.clock(),
            })?;
            report.attempts.push(record);
            if outcome == RoundOutcome::Succeeded {
                report.source = Some(SubtaskSource::Generated { attempts: attempt });
                report.success = true;
                return Ok(report);
            }
            previous = Some((text, message));
        }

        let last = previous.map(|(_, m)| m).unwrap_or_default();
        warn!(subtask, attempts = self.max_attempts, "retries exhausted");
        wm.put(WorkingMemoryEntry::new(
            TASK_FAILED_KEY,
            format!("{subtask}: {last}"),
            Producer::Unit("interaction".into()),
            world.clock(),
            1.0,
        ));
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_forms() {
        assert_eq!(
            parse_decomposition("t", "1. go to well\n2. fill bucket\n3. return"),
            ["go to well", "fill bucket", "return"]
        );
        assert_eq!(
            parse_decomposition("fetch water", "ATOMIC"),
            ["fetch water"]
        );
        assert_eq!(parse_decomposition("fetch water", ""), ["fetch water"]);
    }
}
