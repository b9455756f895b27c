//! The decision pipeline: an ordered set of units that read and write working
//! memory, ending in a dialogue line or a task plan, followed by a consistency
//! check against the persona.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::cognition::{numbered_items, Cognition};
use crate::llm::{LlmError, Role};
use crate::working_memory::{Producer, WorkingMemory, WorkingMemoryEntry};
use crate::Tick;

/// Key the `format` unit writes its final output under.
pub const FINAL_OUTPUT_KEY: &str = "format";
/// Emitted when a decision is rejected twice.
pub const FALLBACK_UTTERANCE: &str = "…";
/// Salience of unit outputs in working memory.
pub const UNIT_SALIENCE: f64 = 0.9;

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("unit id `{0}` is already registered")]
    DuplicateUnitId(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("no enabled units")]
    NoEnabledUnits,
    #[error("final output is neither `SAY:` nor `TASKS:`: {0:?}")]
    MalformedFinalOutput(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Pure,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitDescriptor {
    pub id: String,
    pub kind: UnitKind,
    pub role: Option<Role>,
    pub reads: Vec<String>,
    pub writes: Vec<String>,
    pub enabled: bool,
}

impl UnitDescriptor {
    pub fn pure(id: &str, writes: &[&str]) -> Self {
        Self {
            id: id.into(),
            kind: UnitKind::Pure,
            role: None,
            reads: vec!["*".into()],
            writes: writes.iter().map(|w| w.to_string()).collect(),
            enabled: true,
        }
    }

    pub fn llm(id: &str, role: Role, writes: &[&str]) -> Self {
        Self {
            kind: UnitKind::Llm,
            role: Some(role),
            ..Self::pure(id, writes)
        }
    }
}

/// Inputs visible to a unit.
pub struct UnitInput<'a> {
    pub cog: &'a Cognition<'a>,
    pub observation: &'a str,
    pub snapshot: &'a [WorkingMemoryEntry],
    pub now: Tick,
}

impl UnitInput<'_> {
    pub fn working_memory_text(&self) -> String {
        if self.snapshot.is_empty() {
            return "(empty)".into();
        }
        let lines: Vec<String> = self
            .snapshot
            .iter()
            .map(|e| format!("- {}: {}", e.key, e.value))
            .collect();
        lines.join("\n")
    }
}

/// A unit's behaviour: produces `(key, value)` writes from its input.
pub trait Unit: Send + Sync {
    fn run(&self, input: &UnitInput) -> Result<Vec<(String, String)>, LlmError>;
}

impl<F> Unit for F
where
    F: Fn(&UnitInput) -> Result<Vec<(String, String)>, LlmError> + Send + Sync,
{
    fn run(&self, input: &UnitInput) -> Result<Vec<(String, String)>, LlmError> {
        self(input)
    }
}

const POSITIVE: &[&str] = &[
    "good",
    "great",
    "happy",
    "glad",
    "thanks",
    "thank",
    "welcome",
    "friend",
    "friends",
    "love",
    "kind",
    "help",
    "hello",
    "morning",
    "pleased",
    "wonderful",
    "safe",
    "beautiful",
    "fine",
    "gift",
];
const NEGATIVE: &[&str] = &[
    "bad",
    "angry",
    "hate",
    "danger",
    "dangerous",
    "thief",
    "stole",
    "steal",
    "kill",
    "attack",
    "fire",
    "broken",
    "lost",
    "afraid",
    "sad",
    "sorry",
    "enemy",
    "hurt",
    "dead",
    "curse",
];

/// Lexicon valence in `[-1, 1]`: (positive - negative) / (positive + negative).
pub fn affect_valence(text: &str) -> f64 {
    let words = crate::ltm::words(text);
    let pos = words
        .iter()
        .filter(|w| POSITIVE.contains(&w.as_str()))
        .count() as f64;
    let neg = words
        .iter()
        .filter(|w| NEGATIVE.contains(&w.as_str()))
        .count() as f64;
    if pos + neg == 0.0 {
        0.0
    } else {
        (pos - neg) / (pos + neg)
    }
}

struct Affect;

impl Unit for Affect {
    fn run(&self, input: &UnitInput) -> Result<Vec<(String, String)>, LlmError> {
        Ok(vec![(
            "affect".into(),
            format!("{:.2}", affect_valence(input.observation)),
        )])
    }
}

struct Prompted {
    role: Role,
    key: &'static str,
}

impl Unit for Prompted {
    fn run(&self, input: &UnitInput) -> Result<Vec<(String, String)>, LlmError> {
        let wm = input.working_memory_text();
        let reply = input.cog.ask(
            self.role,
            &[("observation", input.observation), ("working_memory", &wm)],
        )?;
        Ok(vec![(self.key.into(), reply.trim().to_string())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    #[default]
    Llm,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    TaskPlan,
    Dialogue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub unit: String,
    pub keys_written: Vec<String>,
    pub evicted: Vec<String>,
    /// Working memory was refreshed with a newer observation before this unit ran.
    pub refreshed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub tasks: Vec<String>,
    pub utterance: String,
    pub trace: Vec<TraceStep>,
}

impl Decision {
    pub fn dialogue(utterance: impl Into<String>) -> Self {
        Self {
            kind: DecisionKind::Dialogue,
            tasks: Vec::new(),
            utterance: utterance.into(),
            trace: Vec::new(),
        }
    }

    pub fn tasks(tasks: Vec<String>) -> Self {
        Self {
            kind: DecisionKind::TaskPlan,
            tasks,
            utterance: String::new(),
            trace: Vec::new(),
        }
    }

    /// Parses `SAY: <utterance>` or `TASKS:` followed by numbered lines.
    pub fn parse(text: &str) -> Result<Self, DecisionError> {
        let trimmed = text.trim();
        if let Some(rest) = trimmed.strip_prefix("SAY:") {
            let utterance = rest.trim();
            if !utterance.is_empty() {
                return Ok(Self::dialogue(utterance));
            }
        } else if let Some(rest) = trimmed.strip_prefix("TASKS:") {
            let tasks = numbered_items(rest);
            if !tasks.is_empty() {
                return Ok(Self::tasks(tasks));
            }
        }
        Err(DecisionError::MalformedFinalOutput(text.to_string()))
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DecisionKind::Dialogue => write!(f, "SAY: {}", self.utterance),
            DecisionKind::TaskPlan => {
                f.write_str("TASKS:")?;
                for (i, t) in self.tasks.iter().enumerate() {
                    write!(f, "\n{}. {t}", i + 1)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    Reject,
    Rewrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictVerdict {
    pub status: VerdictStatus,
    pub reason: String,
    pub rewritten: String,
}

impl ConflictVerdict {
    /// Reads `PASS`, `REJECT: <reason>` or `REWRITE: <text>`.
    pub fn parse(reply: &str) -> Option<Self> {
        let t = reply.trim();
        if t == "PASS" || t.starts_with("PASS\n") || t.starts_with("PASS.") {
            return Some(Self {
                status: VerdictStatus::Pass,
                reason: String::new(),
                rewritten: String::new(),
            });
        }
        if let Some(reason) = t.strip_prefix("REJECT:") {
            return Some(Self {
                status: VerdictStatus::Reject,
                reason: reason.trim().into(),
                rewritten: String::new(),
            });
        }
        if let Some(text) = t.strip_prefix("REWRITE:") {
            let text = text.trim();
            if !text.is_empty() {
                return Some(Self {
                    status: VerdictStatus::Rewrite,
                    reason: String::new(),
                    rewritten: text.into(),
                });
            }
        }
        None
    }

    /// The decision after applying this verdict; `None` when rejected.
    ///
    /// A rewrite replaces a dialogue's utterance. For a task plan the rewritten text
    /// is read as a final output when it parses as one, and as an utterance otherwise.
    pub fn apply(&self, decision: &Decision) -> Option<Decision> {
        match self.status {
            VerdictStatus::Pass => Some(decision.clone()),
            VerdictStatus::Reject => None,
            VerdictStatus::Rewrite => {
                let mut out = match decision.kind {
                    DecisionKind::Dialogue => Decision::dialogue(&self.rewritten),
                    DecisionKind::TaskPlan => Decision::parse(&self.rewritten)
                        .unwrap_or_else(|_| Decision::dialogue(&self.rewritten)),
                };
                out.trace = decision.trace.clone();
                Some(out)
            }
        }
    }
}

pub struct DecisionEngine {
    units: Vec<(UnitDescriptor, Box<dyn Unit>)>,
    pub order_mode: OrderMode,
    static_order: Vec<String>,
    /// Treat unreadable conflict verdicts as rejections instead of passes.
    pub fail_closed: bool,
}

impl Default for DecisionEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl DecisionEngine {
    /// Engine with the built-in `affect`, `intent` and `format` units.
    pub fn new() -> Self {
        let mut engine = Self {
            units: Vec::new(),
            order_mode: OrderMode::Llm,
            static_order: Vec::new(),
            fail_closed: false,
        };
        engine
            .register_unit(
                UnitDescriptor::pure("affect", &["affect"]),
                Box::new(Affect),
            )
            .unwrap();
        engine
            .register_unit(
                UnitDescriptor::llm("intent", Role::Intent, &["intent"]),
                Box::new(Prompted {
                    role: Role::Intent,
                    key: "intent",
                }),
            )
            .unwrap();
        engine
            .register_unit(
                UnitDescriptor::llm("format", Role::Format, &[FINAL_OUTPUT_KEY]),
                Box::new(Prompted {
                    role: Role::Format,
                    key: FINAL_OUTPUT_KEY,
                }),
            )
            .unwrap();
        engine.static_order = vec!["affect".into(), "intent".into(), "format".into()];
        engine
    }

    pub fn register_unit(
        &mut self,
        descriptor: UnitDescriptor,
        unit: Box<dyn Unit>,
    ) -> Result<(), DecisionError> {
        if self.units.iter().any(|(d, _)| d.id == descriptor.id) {
            return Err(DecisionError::DuplicateUnitId(descriptor.id));
        }
        self.units.push((descriptor, unit));
        Ok(())
    }

    pub fn descriptors(&self) -> Vec<&UnitDescriptor> {
        self.units.iter().map(|(d, _)| d).collect()
    }

    pub fn set_enabled(&mut self, id: &str, enabled: bool) -> Result<(), DecisionError> {
        let (d, _) = self
            .units
            .iter_mut()
            .find(|(d, _)| d.id == id)
            .ok_or_else(|| DecisionError::UnknownUnit(id.into()))?;
        d.enabled = enabled;
        Ok(())
    }

    pub fn set_static_order(&mut self, order: Vec<String>) -> Result<(), DecisionError> {
        for id in &order {
            if !self.units.iter().any(|(d, _)| &d.id == id) {
                return Err(DecisionError::UnknownUnit(id.clone()));
            }
        }
        self.static_order = order;
        Ok(())
    }

    fn enabled_ids(&self) -> Vec<String> {
        self.units
            .iter()
            .filter(|(d, _)| d.enabled)
            .map(|(d, _)| d.id.clone())
            .collect()
    }

    /// Configured order restricted to enabled units; enabled units it omits follow
    /// in registration order.
    pub fn static_order(&self) -> Vec<String> {
        let enabled = self.enabled_ids();
        let mut order: Vec<String> = self
            .static_order
            .iter()
            .filter(|id| enabled.contains(id))
            .cloned()
            .collect();
        for id in enabled {
            if !order.contains(&id) {
                order.push(id);
            }
        }
        order
    }

    /// Asks for an execution order and falls back to the static order unless the
    /// reply is a permutation of the enabled units.
    pub fn order_units(
        &self,
        cog: &Cognition,
        observation: &str,
    ) -> Result<Vec<String>, DecisionError> {
        let fallback = self.static_order();
        if fallback.is_empty() {
            return Err(DecisionError::NoEnabledUnits);
        }
        if self.order_mode == OrderMode::Static {
            return Ok(fallback);
        }
        let units = fallback.join(", ");
        let reply = cog.ask(
            Role::UnitOrder,
            &[("units", &units), ("observation", observation)],
        )?;
        let proposed: Vec<String> = reply
            .trim()
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let mut sorted_proposed = proposed.clone();
        sorted_proposed.sort();
        let mut sorted_enabled = fallback.clone();
        sorted_enabled.sort();
        if sorted_proposed == sorted_enabled {
            Ok(proposed)
        } else {
            debug!(
                reply = reply.as_str(),
                "unit order reply is not a permutation, using static order"
            );
            Ok(fallback)
        }
    }

    /// Runs the units in order, writing each unit's output to working memory before
    /// the next runs. `refresh` is called between units and returns true when it put
    /// a newer observation into working memory.
    pub fn run_pipeline(
        &self,
        cog: &Cognition,
        observation: &str,
        wm: &mut WorkingMemory,
        now: Tick,
        refresh: &mut dyn FnMut(&mut WorkingMemory) -> bool,
    ) -> Result<Decision, DecisionError> {
        let order = self.order_units(cog, observation)?;
        let mut trace = Vec::new();
        wm.remove(FINAL_OUTPUT_KEY);
        for (n, id) in order.iter().enumerate() {
            let refreshed = n > 0 && refresh(wm);
            let (descriptor, unit) = self
                .units
                .iter()
                .find(|(d, _)| &d.id == id)
                .ok_or_else(|| DecisionError::UnknownUnit(id.clone()))?;
            let snapshot = wm.snapshot();
            let writes = unit.run(&UnitInput {
                cog,
                observation,
                snapshot: &snapshot,
                now,
            })?;
            let mut step = TraceStep {
                unit: descriptor.id.clone(),
                keys_written: Vec::new(),
                evicted: Vec::new(),
                refreshed,
            };
            for (key, value) in writes {
                let entry = WorkingMemoryEntry::new(
                    &key,
                    value,
                    Producer::Unit(descriptor.id.clone()),
                    now,
                    UNIT_SALIENCE,
                );
                step.evicted
                    .extend(wm.put(entry).into_iter().map(|e| e.key));
                step.keys_written.push(key);
            }
            trace.push(step);
        }
        let output = wm
            .get(FINAL_OUTPUT_KEY)
            .map(|e| e.value.clone())
            .unwrap_or_default();
        let mut decision = Decision::parse(&output)?;
        decision.trace = trace;
        Ok(decision)
    }

    /// Reviews `decision` against the persona; unreadable verdicts pass (or reject
    /// when `fail_closed` is set) with a warning.
    pub fn check_conflict(
        &self,
        cog: &Cognition,
        decision: &Decision,
    ) -> Result<ConflictVerdict, LlmError> {
        let text = decision.to_string();
        let worldview = cog.persona.worldview_summary();
        let relationships = cog.persona.relationships_summary();
        let reply = cog.ask(
            Role::Conflict,
            &[
                ("decision", &text),
                ("worldview", &worldview),
                ("relationships", &relationships),
            ],
        )?;
        Ok(ConflictVerdict::parse(&reply).unwrap_or_else(|| {
            warn!(
                reply = reply.as_str(),
                fail_closed = self.fail_closed,
                "unparseable conflict verdict"
            );
            let status = if self.fail_closed {
                VerdictStatus::Reject
            } else {
                VerdictStatus::Pass
            };
            ConflictVerdict {
                status,
                reason: format!("unparseable verdict: {}", reply.trim()),
                rewritten: String::new(),
            }
        }))
    }
}
