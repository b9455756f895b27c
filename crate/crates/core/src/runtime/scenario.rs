//! Scenario files.
//!
//! A scenario is a TOML document whose first line is exactly `#!larp-scenario 1`.
//! Unknown keys anywhere are rejected. See the README for a complete example.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::decision::OrderMode;
use crate::llm::{BackendConfig, BackendKind, Role};
use crate::logicql::KnowledgeBase;
use crate::memory::MemoryConfig;
use crate::persona::Persona;
use crate::working_memory::WorkingMemoryConfig;
use crate::world::{WorldSpec, WorldState};

pub const SCENARIO_HEADER: &str = "#!larp-scenario 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// World character driven by run-script commands or the REPL user.
    #[serde(default = "default_player")]
    pub player: String,
    pub backend: BackendSpec,
    pub world: WorldSpec,
    #[serde(default)]
    pub units: UnitsSpec,
    #[serde(default)]
    pub characters: Vec<CharacterSpec>,
    #[serde(default)]
    pub turns: Vec<TurnSpec>,
    /// Directory the scenario was loaded from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_player() -> String {
    "player".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default)]
    pub transcript: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Role name (or `default`) -> model name.
    #[serde(default)]
    pub models: BTreeMap<String, String>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub max_retries: Option<u32>,
    /// Directory with prompt overrides, `<role>.txt` each.
    #[serde(default)]
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsSpec {
    #[serde(default)]
    pub order: OrderMode,
    #[serde(default)]
    pub static_order: Vec<String>,
    #[serde(default)]
    pub disabled: Vec<String>,
    #[serde(default)]
    pub fail_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterSpec {
    #[serde(flatten)]
    pub persona: Persona,
    /// Initial knowledge in logic syntax.
    #[serde(default)]
    pub facts: String,
    /// Initial episodic memories.
    #[serde(default)]
    pub memories: Vec<String>,
    #[serde(default)]
    pub working_memory: WorkingMemoryConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub skill_threshold: Option<f64>,
}

/// One turn of the run script: the player's commands, then every NPC acts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnSpec {
    /// Idle ticks before the turn starts.
    #[serde(default)]
    pub advance: u64,
    /// Commands in REPL syntax: `say <text>`, `do <api>(<args>)` or `wait`.
    #[serde(default)]
    pub player: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl Scenario {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ScenarioError> {
        let err = |message: String| ScenarioError {
            path: origin.display().to_string(),
            message,
        };
        let first = text.lines().next().unwrap_or("");
        if first.trim_end() != SCENARIO_HEADER {
            if let Some(version) = first.strip_prefix("#!larp-scenario ") {
                return Err(err(format!(
                    "scenario version {version}, this build reads version 1"
                )));
            }
            return Err(err(format!("first line must be `{SCENARIO_HEADER}`")));
        }
        let mut scenario: Scenario = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        scenario.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        scenario.check().map_err(err)?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    /// Cross-field checks that the TOML schema alone cannot express.
    fn check(&self) -> Result<(), String> {
        let world = WorldState::from_spec(&self.world).map_err(|e| e.to_string())?;
        let in_world: BTreeSet<&str> = world.characters().into_iter().collect();
        if !in_world.contains(self.player.as_str()) {
            return Err(format!(
                "player `{}` is not a character in the world",
                self.player
            ));
        }
        let mut seen = BTreeSet::new();
        for c in &self.characters {
            let id = c.persona.id.as_str();
            if !seen.insert(id) {
                return Err(format!("duplicate character `{id}`"));
            }
            if id == self.player {
                return Err(format!("`{id}` is the player and cannot also be an NPC"));
            }
            if !in_world.contains(id) {
                return Err(format!("character `{id}` is not placed in the world"));
            }
            c.persona.validate()?;
            c.working_memory
                .validate()
                .map_err(|e| format!("{id}: {e}"))?;
            c.memory.validate().map_err(|e| format!("{id}: {e}"))?;
            KnowledgeBase::parse(&c.facts).map_err(|e| format!("{id}: facts: {e}"))?;
        }
        for id in self.units.static_order.iter().chain(&self.units.disabled) {
            if !["affect", "intent", "format"].contains(&id.as_str()) {
                return Err(format!("unknown unit `{id}`"));
            }
        }
        for turn in &self.turns {
            for command in &turn.player {
                match super::repl::Command::parse(command) {
                    Ok(
                        super::repl::Command::Say(_)
                        | super::repl::Command::Do(_)
                        | super::repl::Command::Wait,
                    ) => {}
                    Ok(_) => {
                        return Err(format!(
                            "run script command `{command}` is not a player action"
                        ))
                    }
                    Err(e) => return Err(format!("run script command `{command}`: {e}")),
                }
            }
        }
        self.backend_config()?
            .validate()
            .map_err(|e| e.to_string())?;
        Ok(())
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn backend_config(&self) -> Result<BackendConfig, String> {
        let spec = &self.backend;
        for key in spec.models.keys() {
            if key != "default" && key.parse::<Role>().is_err() {
                return Err(format!("unknown role `{key}` in backend.models"));
            }
        }
        let mut config = match spec.kind {
            BackendKind::Scripted => {
                let path = spec
                    .transcript
                    .as_ref()
                    .ok_or("scripted backend needs `transcript`")?;
                BackendConfig::scripted(self.resolve(path))
            }
            BackendKind::Http => {
                let endpoint = spec
                    .endpoint
                    .clone()
                    .or_else(|| std::env::var(crate::llm::ENDPOINT_ENV).ok())
                    .ok_or("http backend needs `endpoint` (or the LARP_LLM_ENDPOINT variable)")?;
                let mut c = BackendConfig::http(endpoint, "default");
                c.auth_token = std::env::var(crate::llm::TOKEN_ENV).ok();
                c
            }
        };
        config.models.extend(spec.models.clone());
        if let Some(secs) = spec.timeout_secs {
            config.timeout = Duration::from_secs(secs);
        }
        if let Some(n) = spec.max_retries {
            config.max_retries = n;
        }
        Ok(config)
    }

    pub fn prompts_dir(&self) -> Option<PathBuf> {
        self.backend.prompts.as_ref().map(|p| self.resolve(p))
    }
}
