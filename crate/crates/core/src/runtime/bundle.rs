//! Session state bundles.
//!
//! ```text
//! LARP-BUNDLE 1 crc32=<8 hex digits of the body>
//! <JSON body>
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Agent, RuntimeError, Store};
use crate::action::SkillLibrary;
use crate::llm::Role;
use crate::logicql::KnowledgeBase;
use crate::ltm::{ForgetSampler, MemoryStore};
use crate::working_memory::WorkingMemory;
use crate::world::WorldState;

pub const BUNDLE_MAGIC: &str = "LARP-BUNDLE";
const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub scenario: String,
    /// Completed turns.
    pub turn: u64,
    pub world: WorldState,
    pub agents: BTreeMap<String, AgentState>,
    pub llm: LlmState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentState {
    /// Long-term store in its snapshot format.
    pub ltm: String,
    /// Knowledge base as a logic program.
    pub kb: String,
    pub wm: WorkingMemory,
    pub skills: SkillLibrary,
    pub sampler_seed: u64,
    /// Decimal, since the position does not fit a JSON number.
    pub sampler_word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmState {
    pub counts: BTreeMap<Role, u64>,
    /// Replay position of a scripted backend.
    pub consumed: Option<Vec<usize>>,
}

impl AgentState {
    pub fn capture(agent: &Agent) -> Self {
        let m = &agent.memory;
        Self {
            ltm: m.ltm.to_snapshot(),
            kb: m.kb.to_program(),
            wm: m.wm.clone(),
            skills: agent.skills.clone(),
            sampler_seed: m.sampler.seed(),
            sampler_word_pos: m.sampler.word_pos().to_string(),
        }
    }

    pub(crate) fn apply(&self, agent: &mut Agent) -> Result<(), String> {
        let id = &agent.persona.id;
        let ltm = MemoryStore::from_snapshot(&self.ltm).map_err(|e| format!("{id}: ltm: {e}"))?;
        let kb = KnowledgeBase::parse(&self.kb).map_err(|e| format!("{id}: kb: {e}"))?;
        let word_pos: u128 = self
            .sampler_word_pos
            .parse()
            .map_err(|e| format!("{id}: sampler position: {e}"))?;
        let mut skills = self.skills.clone();
        skills.rebuild_keys();
        agent.memory.ltm = ltm;
        agent.memory.kb = kb;
        agent.memory.wm = self.wm.clone();
        agent.memory.sampler = ForgetSampler::resume(self.sampler_seed, word_pos);
        agent.skills = skills;
        Ok(())
    }

    pub fn render(&self, store: Store) -> String {
        match store {
            Store::Wm => self.wm.dump(),
            Store::Ltm => self.ltm.clone(),
            Store::Kb => self.kb.clone(),
            Store::Skills => self.skills.dump(),
        }
    }
}

impl Bundle {
    fn body(&self) -> String {
        serde_json::to_string(self).expect("bundle serialises")
    }

    pub fn to_text(&self) -> String {
        let body = self.body();
        format!(
            "{BUNDLE_MAGIC} {BUNDLE_VERSION} crc32={:08x}\n{body}\n",
            crc32fast::hash(body.as_bytes())
        )
    }

    pub fn parse(text: &str) -> Result<Self, RuntimeError> {
        let corrupt = |m: String| RuntimeError::Bundle(m);
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| corrupt("missing header line".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(BUNDLE_MAGIC) {
            return Err(corrupt(format!(
                "not a bundle (expected `{BUNDLE_MAGIC}` header)"
            )));
        }
        let version = parts.next().unwrap_or("");
        if version != BUNDLE_VERSION.to_string() {
            return Err(corrupt(format!(
                "bundle version `{version}`, this build reads version {BUNDLE_VERSION}"
            )));
        }
        let crc = parts
            .next()
            .and_then(|p| p.strip_prefix("crc32="))
            .and_then(|h| u32::from_str_radix(h, 16).ok())
            .ok_or_else(|| corrupt("header lacks a crc32 field".into()))?;
        let body = body.strip_suffix('\n').unwrap_or(body);
        let actual = crc32fast::hash(body.as_bytes());
        if actual != crc {
            return Err(corrupt(format!(
                "checksum mismatch (header {crc:08x}, body {actual:08x})"
            )));
        }
        serde_json::from_str(body).map_err(|e| corrupt(format!("malformed body: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = std::fs::read_to_string(path).map_err(|e| RuntimeError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            RuntimeError::Bundle(m) => RuntimeError::Bundle(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Hex SHA-256 of the body.
    pub fn hash(&self) -> String {
        Sha256::digest(self.body().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn inspect(&self, character: &str, store: Store) -> Result<String, RuntimeError> {
        let agent = self
            .agents
            .get(character)
            .ok_or_else(|| RuntimeError::UnknownCharacter(character.into()))?;
        Ok(agent.render(store))
    }
}
