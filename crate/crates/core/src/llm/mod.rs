//! Backend-agnostic LLM access.
//!
//! Every pipeline stage talks to a language model through [`LlmBridge::complete`],
//! tagging its request with a [`Role`]. The bridge routes each role to a configured
//! model name, forwards the request to a [`ChatBackend`], counts completed calls per
//! role and keeps a history of exchanges for inspection.
//!
//! Two backends ship with the crate: [`ScriptedBackend`] replays a transcript file
//! deterministically (used by every test and golden scenario) and [`HttpBackend`]
//! speaks a chat-completion wire protocol for live use.

mod http;
mod prompts;
mod scripted;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, ENDPOINT_ENV, TOKEN_ENV};
pub use prompts::{PromptTemplate, Prompts, PROMPT_VERSION};
pub use scripted::{ScriptedBackend, TranscriptEntry, TRANSCRIPT_MAGIC};

/// Pipeline role a request is issued for. The role is the routing key of the model map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SelfAsk,
    LogicGen,
    KeywordExtract,
    CotAnswer,
    Reconstruct,
    Importance,
    UnitOrder,
    Intent,
    Format,
    Decompose,
    Codegen,
    ReflectCode,
    Conflict,
    QaGen,
    ReflectMemory,
}

impl Role {
    pub const ALL: [Role; 15] = [
        Role::SelfAsk,
        Role::LogicGen,
        Role::KeywordExtract,
        Role::CotAnswer,
        Role::Reconstruct,
        Role::Importance,
        Role::UnitOrder,
        Role::Intent,
        Role::Format,
        Role::Decompose,
        Role::Codegen,
        Role::ReflectCode,
        Role::Conflict,
        Role::QaGen,
        Role::ReflectMemory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::SelfAsk => "self_ask",
            Role::LogicGen => "logic_gen",
            Role::KeywordExtract => "keyword_extract",
            Role::CotAnswer => "cot_answer",
            Role::Reconstruct => "reconstruct",
            Role::Importance => "importance",
            Role::UnitOrder => "unit_order",
            Role::Intent => "intent",
            Role::Format => "format",
            Role::Decompose => "decompose",
            Role::Codegen => "codegen",
            Role::ReflectCode => "reflect_code",
            Role::Conflict => "conflict",
            Role::QaGen => "qa_gen",
            Role::ReflectMemory => "reflect_memory",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| LlmError::UnknownRole(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::System => "system",
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::System,
            text: text.into(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role: Role,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// A request with temperature 0 and a 512-token budget.
    pub fn new(role: Role, messages: Vec<Message>) -> Self {
        Self {
            role,
            messages,
            temperature: 0.0,
            max_tokens: 512,
            seed: None,
        }
    }

    /// Shorthand for the common system + user pair.
    pub fn prompt(role: Role, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self::new(role, vec![Message::system(system), Message::user(user)])
    }

    /// Text of the last user message, or the empty string.
    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.speaker == Speaker::User)
            .map(|m| m.text.as_str())
            .unwrap_or("")
    }

    fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest(
                "messages must not be empty".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(
                "temperature must be finite and >= 0".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub response_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub backend_id: String,
    pub usage: Usage,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("scripted transcript exhausted for role `{role}` (last user message: {excerpt:?})")]
    TranscriptExhausted { role: Role, excerpt: String },
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("backend rejected request with status {status}: {body}")]
    BackendRejected { status: u16, body: String },
    #[error("backend request timed out after {0:?}")]
    Timeout(Duration),
    #[error("no model configured for role `{0}`")]
    UnconfiguredRole(Role),
    #[error("unknown role tag `{0}`")]
    UnknownRole(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("transcript {path}:{line}: {message}")]
    TranscriptSyntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A chat-completion backend. Implementations must be safe to call concurrently.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, model: &str, request: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Replay position, for backends that have one. Saved into bundles.
    fn replay_state(&self) -> Option<Vec<usize>> {
        None
    }

    fn restore_replay_state(&self, _consumed: &[usize]) -> Result<(), LlmError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Role tag (or `"default"`) to model name.
    pub models: BTreeMap<String, String>,
    pub endpoint: Option<String>,
    pub auth_token: Option<String>,
    pub transcript: Option<PathBuf>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base: Duration,
}

impl BackendConfig {
    pub fn scripted(transcript: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            models: BTreeMap::new(),
            endpoint: None,
            auth_token: None,
            transcript: Some(transcript.into()),
            timeout: Duration::from_secs(30),
            max_retries: 0,
            backoff_base: Duration::from_millis(250),
        }
    }

    pub fn http(endpoint: impl Into<String>, default_model: impl Into<String>) -> Self {
        let mut models = BTreeMap::new();
        models.insert("default".to_string(), default_model.into());
        Self {
            kind: BackendKind::Http,
            models,
            endpoint: Some(endpoint.into()),
            auth_token: None,
            transcript: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(250),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.kind {
            BackendKind::Scripted if self.transcript.is_none() => Err(LlmError::InvalidConfig(
                "scripted backend requires a transcript path".into(),
            )),
            BackendKind::Http if self.endpoint.as_deref().is_none_or(str::is_empty) => Err(
                LlmError::InvalidConfig("http backend requires an endpoint".into()),
            ),
            _ => {
                for key in self.models.keys() {
                    if key != "default" {
                        key.parse::<Role>()?;
                    }
                }
                Ok(())
            }
        }
    }

    /// Builds the bridge this configuration describes.
    pub fn build(&self) -> Result<LlmBridge, LlmError> {
        self.validate()?;
        let backend: Box<dyn ChatBackend> = match self.kind {
            BackendKind::Scripted => {
                let path = self.transcript.as_ref().expect("validated");
                Box::new(ScriptedBackend::from_path(path)?)
            }
            BackendKind::Http => Box::new(HttpBackend::new(self)?),
        };
        let mut models = BTreeMap::new();
        let mut default = self.models.get("default").cloned();
        if self.kind == BackendKind::Scripted && default.is_none() {
            default = Some("scripted".to_string());
        }
        for (key, model) in &self.models {
            if key != "default" {
                models.insert(key.parse::<Role>()?, model.clone());
            }
        }
        Ok(LlmBridge::with_routing(backend, models, default))
    }
}

/// One completed call, kept for inspection and transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: Role,
    pub model: String,
    pub prompt: String,
    pub reply: String,
}

#[derive(Debug, Default)]
struct BridgeLedger {
    counts: BTreeMap<Role, u64>,
    history: Vec<Exchange>,
}

/// Routes role-tagged requests to a backend and records what happened.
pub struct LlmBridge {
    backend: Box<dyn ChatBackend>,
    models: BTreeMap<Role, String>,
    default_model: Option<String>,
    ledger: Mutex<BridgeLedger>,
}

impl fmt::Debug for LlmBridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmBridge")
            .field("backend", &self.backend.id())
            .field("models", &self.models)
            .field("default_model", &self.default_model)
            .finish()
    }
}

impl LlmBridge {
    /// Bridge that sends every role to `backend` under the model name `"default"`.
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Self::with_routing(backend, BTreeMap::new(), Some("default".to_string()))
    }

    pub fn with_routing(
        backend: Box<dyn ChatBackend>,
        models: BTreeMap<Role, String>,
        default_model: Option<String>,
    ) -> Self {
        Self {
            backend,
            models,
            default_model,
            ledger: Mutex::new(BridgeLedger::default()),
        }
    }

    /// Convenience constructor over an in-memory scripted transcript.
    pub fn scripted(transcript: &str) -> Result<Self, LlmError> {
        Ok(Self::new(Box::new(ScriptedBackend::parse(
            transcript, "<inline>",
        )?)))
    }

    pub fn model_for(&self, role: Role) -> Option<&str> {
        self.models
            .get(&role)
            .or(self.default_model.as_ref())
            .map(String::as_str)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let model = self
            .model_for(request.role)
            .ok_or(LlmError::UnconfiguredRole(request.role))?;
        let response = self.backend.complete(model, request)?;
        let mut ledger = self.ledger.lock().expect("bridge ledger poisoned");
        *ledger.counts.entry(request.role).or_insert(0) += 1;
        ledger.history.push(Exchange {
            role: request.role,
            model: model.to_string(),
            prompt: request.last_user_text().to_string(),
            reply: response.text.clone(),
        });
        Ok(response)
    }

    /// Number of completed requests for `role` since construction (or restore).
    pub fn call_count(&self, role: Role) -> u64 {
        let ledger = self.ledger.lock().expect("bridge ledger poisoned");
        ledger.counts.get(&role).copied().unwrap_or(0)
    }

    pub fn call_counts(&self) -> BTreeMap<Role, u64> {
        self.ledger
            .lock()
            .expect("bridge ledger poisoned")
            .counts
            .clone()
    }

    pub fn total_calls(&self) -> u64 {
        self.call_counts().values().sum()
    }

    /// All exchanges so far, oldest first.
    pub fn history(&self) -> Vec<Exchange> {
        self.ledger
            .lock()
            .expect("bridge ledger poisoned")
            .history
            .clone()
    }

    /// Exchanges from index `from` on.
    pub fn history_since(&self, from: usize) -> Vec<Exchange> {
        let ledger = self.ledger.lock().expect("bridge ledger poisoned");
        ledger
            .history
            .get(from..)
            .map(<[_]>::to_vec)
            .unwrap_or_default()
    }

    pub fn history_len(&self) -> usize {
        self.ledger
            .lock()
            .expect("bridge ledger poisoned")
            .history
            .len()
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn replay_state(&self) -> Option<Vec<usize>> {
        self.backend.replay_state()
    }

    /// Restores counters and replay position saved by [`LlmBridge::replay_state`].
    pub fn restore(
        &self,
        counts: &BTreeMap<Role, u64>,
        consumed: Option<&[usize]>,
    ) -> Result<(), LlmError> {
        if let Some(consumed) = consumed {
            self.backend.restore_replay_state(consumed)?;
        }
        let mut ledger = self.ledger.lock().expect("bridge ledger poisoned");
        ledger.counts = counts.clone();
        Ok(())
    }
}
