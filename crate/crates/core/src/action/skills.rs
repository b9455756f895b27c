//! Per-character skill library and the training-pair log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dsl::SkillScript;
use super::exec::{ActionSpace, Stage};
use super::ActionError;
use crate::embed::{cosine, embed};
use crate::world::ApiSpec;
use crate::Tick;

pub const DEFAULT_SKILL_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillEntry {
    pub id: u64,
    pub task_description: String,
    /// Recomputed from the description on load.
    #[serde(skip)]
    pub key: Vec<f64>,
    pub script: SkillScript,
    pub created_at: Tick,
    pub success_count: u32,
    pub failure_count: u32,
}

impl SkillEntry {
    /// Name under which the skill is callable from scripts.
    pub fn api_name(&self) -> String {
        format!("skill_{}", self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillLibrary {
    pub owner: String,
    pub threshold: f64,
    entries: Vec<SkillEntry>,
    next_id: u64,
}

impl SkillLibrary {
    pub fn new(owner: impl Into<String>) -> Self {
        Self {
            owner: owner.into(),
            threshold: DEFAULT_SKILL_THRESHOLD,
            entries: Vec::new(),
            next_id: 1,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn entries(&self) -> &[SkillEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Restores embedding keys after deserialisation.
    pub fn rebuild_keys(&mut self) {
        for e in &mut self.entries {
            e.key = embed(&e.task_description);
        }
    }

    /// Best entry with similarity at or above the threshold; ties go to the more
    /// successful, then the newer entry.
    pub fn lookup(&self, task: &str) -> Option<(&SkillEntry, f64)> {
        let query = embed(task);
        self.entries
            .iter()
            .map(|e| (e, cosine(&query, &e.key)))
            .filter(|(_, sim)| *sim >= self.threshold)
            .max_by(|(a, sa), (b, sb)| {
                sa.total_cmp(sb)
                    .then_with(|| a.success_count.cmp(&b.success_count))
                    .then_with(|| a.id.cmp(&b.id))
            })
    }

    /// Adds a verified, successfully executed script.
    pub fn cache_skill(&mut self, task: &str, script: SkillScript, now: Tick) -> &SkillEntry {
        let id = self.next_id;
        self.next_id += 1;
        self.entries.push(SkillEntry {
            id,
            task_description: task.to_string(),
            key: embed(task),
            script,
            created_at: now,
            success_count: 1,
            failure_count: 0,
        });
        self.entries.last().expect("just pushed")
    }

    pub fn record_success(&mut self, id: u64) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.id == id) {
            e.success_count += 1;
        }
    }

    pub fn record_failure(&mut self, id: u64) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.id == id) {
            e.failure_count += 1;
        }
    }

    /// Public actions plus this library's skills as zero-argument APIs.
    pub fn action_space(&self) -> ActionSpace {
        let mut space = ActionSpace::public();
        for e in &self.entries {
            space.specs.push(ApiSpec::personal(
                e.api_name(),
                &self.owner,
                &e.task_description,
            ));
            space.skills.insert(e.api_name(), e.script.clone());
        }
        space
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} \"{}\" (created {}, {} ok / {} failed)\n{}\n",
                e.api_name(),
                e.task_description,
                e.created_at,
                e.success_count,
                e.failure_count,
                e.script
            ));
        }
        out
    }
}

pub const TRAINING_LOG_MAGIC: &str = "LARP-TRAINING 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundOutcome {
    Succeeded,
    Failed,
}

/// One generation round: the prompt, what came back and how it fared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingPair {
    pub character: String,
    pub task: String,
    pub role: String,
    pub attempt: u32,
    pub prompt_text: String,
    pub generated_script_text: String,
    pub outcome: RoundOutcome,
    pub failure_stage: Stage,
    pub message: String,
    pub timestamp: Tick,
}

/// Append-only log; records are kept in memory and, when a path is set, appended
/// to a file that starts with [`TRAINING_LOG_MAGIC`] followed by one JSON object
/// per line.
#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    path: Option<PathBuf>,
    records: Vec<TrainingPair>,
}

impl TrainingLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates (or truncates) the file and writes the header.
    pub fn create(path: &Path) -> Result<Self, ActionError> {
        std::fs::write(path, format!("{TRAINING_LOG_MAGIC}\n"))
            .map_err(|e| ActionError::io(path, e))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            records: Vec::new(),
        })
    }

    pub fn records(&self) -> &[TrainingPair] {
        &self.records
    }

    pub fn append(&mut self, pair: TrainingPair) -> Result<(), ActionError> {
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&pair).expect("training pair serialises");
            let mut file = OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| ActionError::io(path, e))?;
            writeln!(file, "{line}").map_err(|e| ActionError::io(path, e))?;
        }
        self.records.push(pair);
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Vec<TrainingPair>, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(TRAINING_LOG_MAGIC) => {}
            Some(other) => return Err(format!("expected `{TRAINING_LOG_MAGIC}`, found `{other}`")),
            None => return Err("empty training log".into()),
        }
        lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 2)))
            .collect()
    }
}
