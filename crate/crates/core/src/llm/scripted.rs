//! Deterministic transcript replay.
//!
//! Transcript grammar (version 1):
//!
//! ```text
//! file    := "LARP-TRANSCRIPT 1" NL { line NL }
//! line    := comment | blank | entry
//! comment := "#" any*
//! entry   := role ["+"] TAB pattern TAB reply
//! pattern := "*" | escaped        ; "*" matches any request
//! reply   := escaped
//! escaped := { char | "\n" | "\t" | "\\" | "\*" }
//! ```
//!
//! An entry answers a request when its role equals the request role and its pattern
//! (if any) is a substring of the request's last user message. The first unconsumed
//! matching entry in file order answers and is consumed. Entries whose role carries
//! a trailing `+` are never consumed; they act as standing defaults and belong at
//! the end of the file.

use std::path::Path;
use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError, Role, Usage};

pub const TRANSCRIPT_MAGIC: &str = "LARP-TRANSCRIPT 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub role: Role,
    pub pattern: Option<String>,
    pub reply: String,
    pub reusable: bool,
}

impl TranscriptEntry {
    fn matches(&self, request: &ChatRequest) -> bool {
        self.role == request.role
            && self
                .pattern
                .as_deref()
                .is_none_or(|p| request.last_user_text().contains(p))
    }

    /// Serialises the entry back to its transcript line.
    pub fn to_line(&self) -> String {
        let pattern = match &self.pattern {
            None => "*".to_string(),
            Some(p) => escape(p),
        };
        format!(
            "{}{}\t{}\t{}",
            self.role,
            if self.reusable { "+" } else { "" },
            pattern,
            escape(&self.reply)
        )
    }
}

#[derive(Debug)]
struct ReplayState {
    consumed: Vec<bool>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    entries: Vec<TranscriptEntry>,
    state: Mutex<ReplayState>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let consumed = vec![false; entries.len()];
        Self {
            id: "scripted".to_string(),
            entries,
            state: Mutex::new(ReplayState { consumed }),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, LlmError> {
        let syntax = |line: usize, message: String| LlmError::TranscriptSyntax {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == TRANSCRIPT_MAGIC => {}
            Some((_, header)) => {
                return Err(syntax(
                    1,
                    format!("expected header `{TRANSCRIPT_MAGIC}`, found `{header}`"),
                ))
            }
            None => return Err(syntax(1, "empty transcript".into())),
        }
        let mut entries = Vec::new();
        for (index, raw) in lines {
            let number = index + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.splitn(3, '\t');
            let (Some(role_field), Some(pattern), Some(reply)) =
                (fields.next(), fields.next(), fields.next())
            else {
                return Err(syntax(
                    number,
                    "expected `role<TAB>pattern<TAB>reply`".into(),
                ));
            };
            let (role_name, reusable) = match role_field.strip_suffix('+') {
                Some(name) => (name, true),
                None => (role_field, false),
            };
            let role = role_name
                .parse::<Role>()
                .map_err(|e| syntax(number, e.to_string()))?;
            let pattern = if pattern == "*" {
                None
            } else {
                Some(unescape(pattern).map_err(|m| syntax(number, m))?)
            };
            let reply = unescape(reply).map_err(|m| syntax(number, m))?;
            entries.push(TranscriptEntry {
                role,
                pattern,
                reply,
                reusable,
            });
        }
        Ok(Self::new(entries))
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    /// Number of consumable entries not yet used.
    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("replay state poisoned");
        self.entries
            .iter()
            .zip(&state.consumed)
            .filter(|(e, used)| !e.reusable && !**used)
            .count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _model: &str, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut state = self.state.lock().expect("replay state poisoned");
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !state.consumed[*i] && e.matches(request));
        let Some((index, entry)) = hit else {
            let excerpt: String = request.last_user_text().chars().take(120).collect();
            return Err(LlmError::TranscriptExhausted {
                role: request.role,
                excerpt,
            });
        };
        if !entry.reusable {
            state.consumed[index] = true;
        }
        let prompt_tokens = request
            .messages
            .iter()
            .map(|m| m.text.split_whitespace().count() as u64)
            .sum();
        Ok(ChatResponse {
            text: entry.reply.clone(),
            backend_id: self.id.clone(),
            usage: Usage {
                prompt_tokens,
                response_tokens: entry.reply.split_whitespace().count() as u64,
            },
        })
    }

    fn replay_state(&self) -> Option<Vec<usize>> {
        let state = self.state.lock().expect("replay state poisoned");
        Some(
            state
                .consumed
                .iter()
                .enumerate()
                .filter(|(_, used)| **used)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    fn restore_replay_state(&self, consumed: &[usize]) -> Result<(), LlmError> {
        let mut state = self.state.lock().expect("replay state poisoned");
        let mut fresh = vec![false; self.entries.len()];
        for &index in consumed {
            match fresh.get_mut(index) {
                Some(slot) => *slot = true,
                None => {
                    return Err(LlmError::InvalidConfig(format!(
                        "replay state names entry {index} but the transcript has {}",
                        self.entries.len()
                    )))
                }
            }
        }
        state.consumed = fresh;
        Ok(())
    }
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    if out == "*" {
        out = "\\*".to_string();
    }
    out
}

pub(crate) fn unescape(text: &str) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some('*') => out.push('*'),
            Some(other) => return Err(format!("unknown escape `\\{other}`")),
            None => return Err("dangling `\\` at end of field".into()),
        }
    }
    Ok(out)
}
