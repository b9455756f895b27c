//! Versioned prompt templates, one file per role under `prompts/`.
//!
//! A template file starts with the line `# larp-prompt v1`, then the system part,
//! a line holding only `---`, and the user part. `{name}` placeholders are replaced
//! at render time; unknown placeholders are left as they are.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ChatRequest, LlmError, Role};

pub const PROMPT_VERSION: &str = "# larp-prompt v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, String> {
        let body = text
            .strip_prefix(PROMPT_VERSION)
            .and_then(|rest| rest.strip_prefix('\n'))
            .ok_or_else(|| format!("prompt must start with `{PROMPT_VERSION}`"))?;
        let (system, user) = body
            .split_once("\n---\n")
            .ok_or_else(|| "prompt needs a `---` line between system and user parts".to_string())?;
        Ok(Self {
            system: system.to_string(),
            user: user.trim_end_matches('\n').to_string(),
        })
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> (String, String) {
        (fill(&self.system, vars), fill(&self.user, vars))
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let hit = tail.find('}').and_then(|end| {
            let name = &tail[1..end];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (end, *v))
        });
        match hit {
            Some((end, value)) => {
                out.push_str(value);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

macro_rules! builtin {
    ($($role:ident => $file:literal),* $(,)?) => {
        fn builtin_text(role: Role) -> &'static str {
            match role {
                $(Role::$role => include_str!(concat!("../../prompts/", $file)),)*
            }
        }
    };
}

builtin! {
    SelfAsk => "self_ask.txt",
    LogicGen => "logic_gen.txt",
    KeywordExtract => "keyword_extract.txt",
    CotAnswer => "cot_answer.txt",
    Reconstruct => "reconstruct.txt",
    Importance => "importance.txt",
    UnitOrder => "unit_order.txt",
    Intent => "intent.txt",
    Format => "format.txt",
    Decompose => "decompose.txt",
    Codegen => "codegen.txt",
    ReflectCode => "reflect_code.txt",
    Conflict => "conflict.txt",
    QaGen => "qa_gen.txt",
    ReflectMemory => "reflect_memory.txt",
}

/// The template set used by every stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    templates: BTreeMap<Role, PromptTemplate>,
}

impl Default for Prompts {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Prompts {
    pub fn builtin() -> Self {
        let templates = Role::ALL
            .into_iter()
            .map(|role| {
                let template = PromptTemplate::parse(builtin_text(role))
                    .unwrap_or_else(|e| panic!("built-in prompt {role}: {e}"));
                (role, template)
            })
            .collect();
        Self { templates }
    }

    /// Built-in templates overridden by any `<role>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, LlmError> {
        let mut prompts = Self::builtin();
        for role in Role::ALL {
            let path = dir.join(format!("{role}.txt"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| LlmError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let template = PromptTemplate::parse(&text).map_err(|message| {
                LlmError::InvalidConfig(format!("{}: {message}", path.display()))
            })?;
            prompts.templates.insert(role, template);
        }
        Ok(prompts)
    }

    pub fn template(&self, role: Role) -> &PromptTemplate {
        &self.templates[&role]
    }

    pub fn request(&self, role: Role, vars: &[(&str, &str)]) -> ChatRequest {
        let (system, user) = self.template(role).render(vars);
        ChatRequest::prompt(role, system, user)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_role_has_a_template() {
        let prompts = Prompts::builtin();
        for role in Role::ALL {
            assert!(!prompts.template(role).user.is_empty(), "{role}");
        }
    }

    #[test]
    fn render_substitutes_known_names_only() {
        let t =
            PromptTemplate::parse("# larp-prompt v1\nI am {persona}\n---\nTask: {task} {other}\n")
                .unwrap();
        let (system, user) = t.render(&[("persona", "Brom"), ("task", "fetch {water}")]);
        assert_eq!(system, "I am Brom");
        assert_eq!(user, "Task: fetch {water} {other}");
    }

    #[test]
    fn missing_header_rejected() {
        assert!(PromptTemplate::parse("hello\n---\nx").is_err());
        assert!(PromptTemplate::parse("# larp-prompt v1\nno separator").is_err());
    }

    #[test]
    fn overrides_load_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("intent.txt"),
            "# larp-prompt v1\nS\n---\nU {x}\n",
        )
        .unwrap();
        let prompts = Prompts::with_overrides(dir.path()).unwrap();
        assert_eq!(
            prompts
                .request(Role::Intent, &[("x", "1")])
                .last_user_text(),
            "U 1"
        );
        assert_eq!(
            prompts.template(Role::Format),
            Prompts::builtin().template(Role::Format)
        );
    }
}
