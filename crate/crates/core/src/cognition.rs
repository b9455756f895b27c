use crate::llm::Prompts;
use crate::llm::{LlmBridge, LlmError, Role};
use crate::persona::Persona;

/// What every model-backed step needs: the bridge, the prompt set and the
/// character it speaks for.
#[derive(Clone, Copy)]
pub struct Cognition<'a> {
    pub bridge: &'a LlmBridge,
    pub prompts: &'a Prompts,
    pub persona: &'a Persona,
}

impl<'a> Cognition<'a> {
    pub fn new(bridge: &'a LlmBridge, prompts: &'a Prompts, persona: &'a Persona) -> Self {
        Self {
            bridge,
            prompts,
            persona,
        }
    }

    /// Renders the role's template with `vars` (plus `{persona}`) and returns the reply text.
    pub fn ask(&self, role: Role, vars: &[(&str, &str)]) -> Result<String, LlmError> {
        let summary = self.persona.summary();
        let mut all: Vec<(&str, &str)> = vec![("persona", summary.as_str())];
        all.extend_from_slice(vars);
        let request = self.prompts.request(role, &all);
        Ok(self.bridge.complete(&request)?.text)
    }

    /// The user part of the prompt `ask` would send, for logging.
    pub fn render_user(&self, role: Role, vars: &[(&str, &str)]) -> String {
        let summary = self.persona.summary();
        let mut all: Vec<(&str, &str)> = vec![("persona", summary.as_str())];
        all.extend_from_slice(vars);
        self.prompts.template(role).render(&all).1
    }
}

/// Items of a numbered list reply: lines like `1. text`, `2) text` or `Q3: text`.
/// Other lines are ignored.
pub fn numbered_items(reply: &str) -> Vec<String> {
    reply
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            let rest = line.strip_prefix(['Q', 'q']).unwrap_or(line);
            let digits = rest.len() - rest.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            if digits == 0 {
                return None;
            }
            let text = rest[digits..].strip_prefix(['.', ')', ':'])?.trim();
            (!text.is_empty()).then(|| text.to_string())
        })
        .collect()
}
