//! Action API descriptions and argument values.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    EntityRef,
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::EntityRef => "entity_ref",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Public,
    Personal { owner: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub name: String,
    pub params: Vec<(String, ParamType)>,
    pub precondition: String,
    pub visibility: Visibility,
    /// Predicates only read the world; they may appear as `if` conditions.
    pub mutating: bool,
}

impl ApiSpec {
    fn public(
        name: &str,
        params: &[(&str, ParamType)],
        precondition: &str,
        mutating: bool,
    ) -> Self {
        Self {
            name: name.into(),
            params: params.iter().map(|(n, t)| (n.to_string(), *t)).collect(),
            precondition: precondition.into(),
            visibility: Visibility::Public,
            mutating,
        }
    }

    pub fn personal(
        name: impl Into<String>,
        owner: impl Into<String>,
        description: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            params: Vec::new(),
            precondition: description.into(),
            visibility: Visibility::Personal {
                owner: owner.into(),
            },
            mutating: true,
        }
    }

    pub fn is_predicate(&self) -> bool {
        !self.mutating
    }

    /// One-line signature used in prompts, e.g. `give(item: entity_ref, to: entity_ref)`.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|(n, t)| format!("{n}: {t}"))
            .collect();
        format!("{}({})", self.name, params.join(", "))
    }

    /// Checks names, arity and value types of `args`.
    pub fn check_args(&self, args: &Args) -> Result<(), String> {
        for name in args.keys() {
            if !self.params.iter().any(|(p, _)| p == name) {
                return Err(format!("{} has no parameter `{name}`", self.name));
            }
        }
        for (name, ty) in &self.params {
            match (args.get(name), ty) {
                (None, _) => return Err(format!("{} is missing argument `{name}`", self.name)),
                (Some(Value::Int(_)), ParamType::Integer) => {}
                (Some(Value::Str(_)), ParamType::String | ParamType::EntityRef) => {}
                (Some(v), _) => {
                    return Err(format!(
                        "{}: argument `{name}` expects {ty}, got {v}",
                        self.name
                    ))
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ApiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.signature())?;
        if !self.mutating {
            f.write_str(" [predicate]")?;
        }
        if !self.precondition.is_empty() {
            write!(f, " -- {}", self.precondition)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            Value::Int(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
        }
    }
}

pub type Args = BTreeMap<String, Value>;

/// Builds an argument map from string pairs.
pub fn args(pairs: &[(&str, &str)]) -> Args {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), Value::Str(v.to_string())))
        .collect()
}

/// `name(k="v", ...)` with arguments in key order.
pub fn format_call(name: &str, args: &Args) -> String {
    let parts: Vec<String> = args.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{name}({})", parts.join(", "))
}

/// The fixed public action set: seven actions followed by three predicates.
pub fn public_api_registry() -> Vec<ApiSpec> {
    use ParamType::*;
    vec![
        ApiSpec::public(
            "move",
            &[("to", String)],
            "destination is adjacent to the actor's location",
            true,
        ),
        ApiSpec::public(
            "say",
            &[("text", String)],
            "text is non-empty; heard by everyone at the location",
            true,
        ),
        ApiSpec::public(
            "pick_up",
            &[("item", EntityRef)],
            "item lies at the actor's location",
            true,
        ),
        ApiSpec::public("drop", &[("item", EntityRef)], "actor holds the item", true),
        ApiSpec::public(
            "give",
            &[("item", EntityRef), ("to", EntityRef)],
            "actor holds the item; recipient is co-located",
            true,
        ),
        ApiSpec::public(
            "use",
            &[("item", EntityRef), ("on", EntityRef)],
            "actor holds the item; target is here and a use rule exists",
            true,
        ),
        ApiSpec::public("wait", &[], "always succeeds", true),
        ApiSpec::public(
            "has",
            &[("item", EntityRef)],
            "true iff the actor holds the item",
            false,
        ),
        ApiSpec::public(
            "at",
            &[("location", String)],
            "true iff the actor is at the location",
            false,
        ),
        ApiSpec::public(
            "sees",
            &[("entity", EntityRef)],
            "true iff the entity is at the actor's location",
            false,
        ),
    ]
}
