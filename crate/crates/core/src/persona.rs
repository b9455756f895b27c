use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ltm::DecayParams;

/// Who a character is: the background every prompt is conditioned on, plus the
/// character's own forgetting parameters (`decay.psi` is its forgetting rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub background: String,
    #[serde(default)]
    pub traits: Vec<String>,
    #[serde(default)]
    pub style: String,
    /// Other character id -> how this character sees them.
    #[serde(default)]
    pub relationships: BTreeMap<String, String>,
    #[serde(default)]
    pub worldview: Vec<String>,
    #[serde(default)]
    pub decay: DecayParams,
}

impl Persona {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            background: String::new(),
            traits: Vec::new(),
            style: String::new(),
            relationships: BTreeMap::new(),
            worldview: Vec::new(),
            decay: DecayParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("persona id must be non-empty".into());
        }
        self.decay
            .validate()
            .map_err(|e| format!("persona `{}`: {e}", self.id))
    }

    /// Short paragraph used as the `{persona}` prompt variable.
    pub fn summary(&self) -> String {
        let mut out = format!("You are {} ({}).", self.name, self.id);
        if !self.background.is_empty() {
            out.push(' ');
            out.push_str(&self.background);
        }
        if !self.traits.is_empty() {
            out.push_str(&format!(" Traits: {}.", self.traits.join(", ")));
        }
        if !self.style.is_empty() {
            out.push_str(&format!(" Style: {}.", self.style));
        }
        out
    }

    pub fn worldview_summary(&self) -> String {
        if self.worldview.is_empty() {
            "none".into()
        } else {
            self.worldview.join(", ")
        }
    }

    pub fn relationships_summary(&self) -> String {
        if self.relationships.is_empty() {
            return "none".into();
        }
        let parts: Vec<String> = self
            .relationships
            .iter()
            .map(|(who, how)| format!("{who}: {how}"))
            .collect();
        parts.join("; ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_mentions_traits() {
        let mut p = Persona::new("smith", "Hilda");
        p.traits = vec!["gruff".into(), "honest".into()];
        assert_eq!(p.summary(), "You are Hilda (smith). Traits: gruff, honest.");
        assert_eq!(p.relationships_summary(), "none");
    }

    #[test]
    fn negative_psi_rejected() {
        let mut p = Persona::new("smith", "Hilda");
        p.decay.psi = -1.0;
        assert!(p.validate().is_err());
    }
}
