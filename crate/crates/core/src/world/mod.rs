//! Deterministic text world: locations, characters, items, a tick clock and the
//! public action set.

mod api;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use api::{
    args, format_call, public_api_registry, ApiSpec, Args, ParamType, Value, Visibility,
};

use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Character,
    Item,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    At(String),
    HeldBy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub placement: Placement,
    pub attributes: BTreeMap<String, String>,
}

/// Effect of `use(item, on)`: sets attributes on the item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UseRule {
    pub item: String,
    pub on: String,
    #[serde(default)]
    pub sets: BTreeMap<String, String>,
    #[serde(default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum EventKind {
    Utterance { text: String },
    Action { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tick: Tick,
    pub location: String,
    pub actor: String,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    EntitySeen,
    UtteranceHeard,
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationItem {
    pub kind: ObservationKind,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for ObservationItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ObservationKind::EntitySeen => write!(f, "sees {}: {}", self.subject, self.detail),
            ObservationKind::UtteranceHeard => {
                write!(f, "{} says: \"{}\"", self.subject, self.detail)
            }
            ObservationKind::Event => write!(f, "{}", self.detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub character_id: String,
    pub tick: Tick,
    pub location: String,
    pub items: Vec<ObservationItem>,
}

impl Observation {
    /// Plain-text rendering, one line per item, used in prompts.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} is at {} (tick {}).",
            self.character_id, self.location, self.tick
        );
        for item in &self.items {
            out.push('\n');
            out.push_str(&item.to_string());
        }
        out
    }

    /// Stable digest of the rendered observation.
    pub fn digest(&self) -> String {
        short_digest(&self.render())
    }
}

/// First 16 hex digits of the sha-256 of `text`.
pub fn short_digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub api: String,
    pub args: Args,
    pub success: bool,
    pub message: String,
    pub tick: Tick,
}

impl fmt::Display for ActionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.success { "ok" } else { "failed" };
        write!(
            f,
            "{} {status}: {}",
            format_call(&self.api, &self.args),
            self.message
        )
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown character `{0}`")]
    UnknownCharacter(String),
    #[error("invalid world: {0}")]
    Invalid(String),
}

/// Declarative world description as it appears in scenario files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub locations: Vec<String>,
    #[serde(default)]
    pub adjacency: Vec<[String; 2]>,
    #[serde(default)]
    pub characters: Vec<CharacterSpec>,
    #[serde(default)]
    pub items: Vec<ItemSpec>,
    #[serde(default)]
    pub use_rules: Vec<UseRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterSpec {
    pub id: String,
    pub location: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// An item either lies at `location` or is carried by `held_by`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemSpec {
    pub id: String,
    #[serde(default)]
    pub location: Option<String>,
    #[serde(default)]
    pub held_by: Option<String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    clock: Tick,
    adjacency: BTreeMap<String, BTreeSet<String>>,
    entities: BTreeMap<String, Entity>,
    events: Vec<Event>,
    cursors: BTreeMap<String, usize>,
    use_rules: Vec<UseRule>,
}

impl WorldState {
    pub fn from_spec(spec: &WorldSpec) -> Result<Self, WorldError> {
        let invalid = |m: String| Err(WorldError::Invalid(m));
        if spec.locations.is_empty() {
            return invalid("at least one location is required".into());
        }
        let mut adjacency: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for loc in &spec.locations {
            if adjacency.insert(loc.clone(), BTreeSet::new()).is_some() {
                return invalid(format!("duplicate location `{loc}`"));
            }
        }
        for [a, b] in &spec.adjacency {
            for end in [a, b] {
                if !adjacency.contains_key(end) {
                    return invalid(format!("adjacency names unknown location `{end}`"));
                }
            }
            if a == b {
                return invalid(format!("location `{a}` cannot be adjacent to itself"));
            }
            adjacency.get_mut(a).unwrap().insert(b.clone());
            adjacency.get_mut(b).unwrap().insert(a.clone());
        }
        let mut entities = BTreeMap::new();
        for c in &spec.characters {
            if !adjacency.contains_key(&c.location) {
                return invalid(format!(
                    "character `{}` starts at unknown location `{}`",
                    c.id, c.location
                ));
            }
            let entity = Entity {
                id: c.id.clone(),
                kind: EntityKind::Character,
                placement: Placement::At(c.location.clone()),
                attributes: c.attributes.clone(),
            };
            if entities.insert(c.id.clone(), entity).is_some() {
                return invalid(format!("duplicate entity id `{}`", c.id));
            }
        }
        for item in &spec.items {
            let placement = match (&item.location, &item.held_by) {
                (Some(loc), None) if adjacency.contains_key(loc) => Placement::At(loc.clone()),
                (Some(loc), None) => {
                    return invalid(format!("item `{}` at unknown location `{loc}`", item.id))
                }
                (None, Some(holder)) => match entities.get(holder) {
                    Some(e) if e.kind == EntityKind::Character => Placement::HeldBy(holder.clone()),
                    _ => {
                        return invalid(format!(
                            "item `{}` held by unknown character `{holder}`",
                            item.id
                        ))
                    }
                },
                _ => {
                    return invalid(format!(
                        "item `{}` needs exactly one of location / held_by",
                        item.id
                    ))
                }
            };
            let entity = Entity {
                id: item.id.clone(),
                kind: EntityKind::Item,
                placement,
                attributes: item.attributes.clone(),
            };
            if entities.insert(item.id.clone(), entity).is_some() {
                return invalid(format!("duplicate entity id `{}`", item.id));
            }
        }
        Ok(Self {
            clock: 0,
            adjacency,
            entities,
            events: Vec::new(),
            cursors: BTreeMap::new(),
            use_rules: spec.use_rules.clone(),
        })
    }

    pub fn clock(&self) -> Tick {
        self.clock
    }

    /// Advances the clock without any action (used between scenario ticks).
    pub fn advance_to(&mut self, tick: Tick) {
        self.clock = self.clock.max(tick);
    }

    pub fn locations(&self) -> impl Iterator<Item = &str> {
        self.adjacency.keys().map(String::as_str)
    }

    pub fn neighbours(&self, location: &str) -> Vec<&str> {
        self.adjacency
            .get(location)
            .map(|s| s.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn characters(&self) -> Vec<&str> {
        self.entities
            .values()
            .filter(|e| e.kind == EntityKind::Character)
            .map(|e| e.id.as_str())
            .collect()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Location of a character, or of whoever holds an item.
    pub fn location_of(&self, id: &str) -> Option<&str> {
        match &self.entities.get(id)?.placement {
            Placement::At(loc) => Some(loc),
            Placement::HeldBy(holder) => self.location_of(holder),
        }
    }

    pub fn inventory(&self, character: &str) -> Vec<&str> {
        self.entities
            .values()
            .filter(|e| e.placement == Placement::HeldBy(character.to_string()))
            .map(|e| e.id.as_str())
            .collect()
    }

    /// Deep copy for dry runs.
    pub fn snapshot(&self) -> WorldState {
        self.clone()
    }

    pub fn restore(&mut self, snapshot: &WorldState) {
        *self = snapshot.clone();
    }

    /// sha-256 over the canonical JSON form of the whole state.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("world serialises");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn character_location(&self, character: &str) -> Result<String, String> {
        match self.entities.get(character) {
            Some(Entity {
                kind: EntityKind::Character,
                placement: Placement::At(loc),
                ..
            }) => Ok(loc.clone()),
            _ => Err(format!("unknown character `{character}`")),
        }
    }

    fn record(&mut self, actor: &str, location: String, kind: EventKind) {
        self.events.push(Event {
            tick: self.clock,
            location,
            actor: actor.into(),
            kind,
        });
    }

    /// Evaluates one of the read-only predicates.
    pub fn predicate(&self, character: &str, api: &str, args: &Args) -> Result<bool, String> {
        let here = self.character_location(character)?;
        let arg = |name: &str| {
            args.get(name)
                .and_then(Value::as_str)
                .ok_or_else(|| format!("{api} needs `{name}`"))
        };
        match api {
            "has" => Ok(self
                .entities
                .get(arg("item")?)
                .is_some_and(|e| e.placement == Placement::HeldBy(character.into()))),
            "at" => Ok(here == arg("location")?),
            "sees" => {
                let id = arg("entity")?;
                Ok(id != character
                    && self
                        .entities
                        .get(id)
                        .is_some_and(|e| e.placement == Placement::At(here.clone())))
            }
            other => Err(format!("`{other}` is not a predicate")),
        }
    }

    /// Applies one public action for `character`. Failures leave the state untouched.
    pub fn step(&mut self, character: &str, api: &str, args: &Args) -> ActionOutcome {
        let result = self.apply(character, api, args);
        let (success, message) = match result {
            Ok(message) => {
                self.clock += 1;
                (true, message)
            }
            Err(message) => (false, message),
        };
        ActionOutcome {
            api: api.into(),
            args: args.clone(),
            success,
            message,
            tick: self.clock,
        }
    }

    fn apply(&mut self, character: &str, api: &str, args: &Args) -> Result<String, String> {
        let spec = public_api_registry()
            .into_iter()
            .find(|s| s.name == api)
            .ok_or_else(|| format!("unknown action `{api}`"))?;
        if !spec.mutating {
            return Err(format!("`{api}` is a predicate, not an action"));
        }
        spec.check_args(args)?;
        let here = self.character_location(character)?;
        let arg = |name: &str| args[name].as_str().unwrap_or_default().to_string();
        let held = |world: &Self, item: &str| {
            world
                .entities
                .get(item)
                .is_some_and(|e| e.placement == Placement::HeldBy(character.into()))
        };
        match api {
            "move" => {
                let to = arg("to");
                if !self.adjacency.contains_key(&to) {
                    return Err(format!("no location named `{to}`"));
                }
                if !self.adjacency[&here].contains(&to) {
                    return Err(format!("`{to}` is not adjacent to `{here}`"));
                }
                self.entities.get_mut(character).unwrap().placement = Placement::At(to.clone());
                self.record(
                    character,
                    to.clone(),
                    EventKind::Action {
                        text: format!("{character} arrived from {here}"),
                    },
                );
                Ok(format!("moved to {to}"))
            }
            "say" => {
                let text = arg("text");
                if text.trim().is_empty() {
                    return Err("nothing to say".into());
                }
                self.record(character, here, EventKind::Utterance { text: text.clone() });
                Ok(format!("said \"{text}\""))
            }
            "pick_up" => {
                let item = arg("item");
                match self.entities.get(&item) {
                    Some(e)
                        if e.kind == EntityKind::Item
                            && e.placement == Placement::At(here.clone()) => {}
                    Some(e)
                        if e.kind == EntityKind::Item
                            && e.placement == Placement::HeldBy(character.into()) =>
                    {
                        return Err(format!("already holding `{item}`"))
                    }
                    Some(e) if e.kind == EntityKind::Character => {
                        return Err(format!("`{item}` is not an item"))
                    }
                    _ => return Err(format!("no `{item}` here")),
                }
                self.entities.get_mut(&item).unwrap().placement =
                    Placement::HeldBy(character.into());
                self.record(
                    character,
                    here,
                    EventKind::Action {
                        text: format!("{character} picked up {item}"),
                    },
                );
                Ok(format!("picked up {item}"))
            }
            "drop" => {
                let item = arg("item");
                if !held(self, &item) {
                    return Err(format!("not holding `{item}`"));
                }
                self.entities.get_mut(&item).unwrap().placement = Placement::At(here.clone());
                self.record(
                    character,
                    here,
                    EventKind::Action {
                        text: format!("{character} dropped {item}"),
                    },
                );
                Ok(format!("dropped {item}"))
            }
            "give" => {
                let (item, to) = (arg("item"), arg("to"));
                if !held(self, &item) {
                    return Err(format!("not holding `{item}`"));
                }
                if to == character {
                    return Err("cannot give to oneself".into());
                }
                match self.entities.get(&to) {
                    Some(e)
                        if e.kind == EntityKind::Character
                            && e.placement == Placement::At(here.clone()) => {}
                    Some(e) if e.kind == EntityKind::Character => {
                        return Err(format!("`{to}` is not here"))
                    }
                    _ => return Err(format!("no character named `{to}`")),
                }
                self.entities.get_mut(&item).unwrap().placement = Placement::HeldBy(to.clone());
                self.record(
                    character,
                    here,
                    EventKind::Action {
                        text: format!("{character} gave {item} to {to}"),
                    },
                );
                Ok(format!("gave {item} to {to}"))
            }
            "use" => {
                let (item, on) = (arg("item"), arg("on"));
                if !held(self, &item) {
                    return Err(format!("not holding `{item}`"));
                }
                let target_here = on == here
                    || self.entities.get(&on).is_some_and(|e| {
                        e.placement == Placement::At(here.clone())
                            || e.placement == Placement::HeldBy(character.into())
                    });
                if !target_here {
                    return Err(format!("no `{on}` here"));
                }
                let rule = self
                    .use_rules
                    .iter()
                    .find(|r| r.item == item && r.on == on)
                    .cloned()
                    .ok_or_else(|| format!("nothing happens when using {item} on {on}"))?;
                let entity = self.entities.get_mut(&item).unwrap();
                entity.attributes.extend(rule.sets.clone());
                let text = rule
                    .message
                    .clone()
                    .unwrap_or_else(|| format!("{character} used {item} on {on}"));
                self.record(character, here, EventKind::Action { text: text.clone() });
                Ok(text)
            }
            "wait" => Ok("waited".into()),
            _ => unreachable!("registry and match arms cover the same actions"),
        }
    }

    /// Everything `character` can currently perceive, plus events at its location
    /// since its previous observation.
    pub fn observe(&mut self, character: &str) -> Result<Observation, WorldError> {
        let here = self
            .character_location(character)
            .map_err(|_| WorldError::UnknownCharacter(character.into()))?;
        let mut items = Vec::new();
        for e in self.entities.values() {
            if e.id == character || e.placement != Placement::At(here.clone()) {
                continue;
            }
            let mut detail = match e.kind {
                EntityKind::Character => {
                    let carried = self.inventory(&e.id);
                    if carried.is_empty() {
                        "character".to_string()
                    } else {
                        format!("character carrying {}", carried.join(", "))
                    }
                }
                EntityKind::Item => "item".to_string(),
            };
            for (k, v) in &e.attributes {
                detail.push_str(&format!(", {k}={v}"));
            }
            items.push(ObservationItem {
                kind: ObservationKind::EntitySeen,
                subject: e.id.clone(),
                detail,
            });
        }
        let start = self.cursors.get(character).copied().unwrap_or(0);
        for event in &self.events[start..] {
            if event.location != here || event.actor == character {
                continue;
            }
            items.push(match &event.kind {
                EventKind::Utterance { text } => ObservationItem {
                    kind: ObservationKind::UtteranceHeard,
                    subject: event.actor.clone(),
                    detail: text.clone(),
                },
                EventKind::Action { text } => ObservationItem {
                    kind: ObservationKind::Event,
                    subject: event.actor.clone(),
                    detail: text.clone(),
                },
            });
        }
        self.cursors.insert(character.into(), self.events.len());
        Ok(Observation {
            character_id: character.into(),
            tick: self.clock,
            location: here,
            items,
        })
    }

    /// Multi-line description for the REPL and `inspect`.
    pub fn describe(&self) -> String {
        let mut out = format!("clock {}\n", self.clock);
        for (loc, next) in &self.adjacency {
            let here: Vec<&str> = self
                .entities
                .values()
                .filter(|e| e.placement == Placement::At(loc.clone()))
                .map(|e| e.id.as_str())
                .collect();
            let next: Vec<&str> = next.iter().map(String::as_str).collect();
            out.push_str(&format!(
                "{loc} [-> {}]: {}\n",
                next.join(", "),
                here.join(", ")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn village() -> WorldState {
        let spec: WorldSpec = toml::from_str(
            r#"
            locations = ["square", "forge", "well", "mill"]
            adjacency = [["square", "forge"], ["square", "well"], ["well", "mill"]]
            characters = [
                { id = "smith", location = "forge" },
                { id = "player", location = "square" },
                { id = "miller", location = "mill" },
            ]
            items = [
                { id = "bucket", location = "square" },
                { id = "hammer", held_by = "smith" },
                { id = "coin", location = "well", attributes = { shiny = "yes" } },
            ]
            use_rules = [{ item = "bucket", on = "well", sets = { filled = "true" } }]
            "#,
        )
        .unwrap();
        WorldState::from_spec(&spec).unwrap()
    }

    #[test]
    fn move_semantics() {
        let mut w = village();
        let ok = w.step("player", "move", &args(&[("to", "forge")]));
        assert!(ok.success, "{ok}");
        assert_eq!(w.location_of("player"), Some("forge"));
        assert_eq!(w.clock(), 1);
        let bad = w.step("player", "move", &args(&[("to", "mill")]));
        assert!(!bad.success);
        assert!(bad.message.contains("not adjacent"));
        assert_eq!(w.clock(), 1);
    }

    #[test]
    fn wait_only_ticks() {
        let mut w = village();
        let before = w.clone();
        assert!(w.step("smith", "wait", &Args::new()).success);
        assert_eq!(w.clock(), 1);
        assert_eq!(w.entities, before.entities);
        assert_eq!(w.events, before.events);
    }

    #[test]
    fn pickup_give_use() {
        let mut w = village();
        assert!(
            !w.step("player", "pick_up", &args(&[("item", "coin")]))
                .success
        );
        assert!(
            w.step("player", "pick_up", &args(&[("item", "bucket")]))
                .success
        );
        assert!(w
            .predicate("player", "has", &args(&[("item", "bucket")]))
            .unwrap());
        assert!(
            !w.step(
                "player",
                "use",
                &args(&[("item", "bucket"), ("on", "well")])
            )
            .success
        );
        w.step("player", "move", &args(&[("to", "well")]));
        let used = w.step(
            "player",
            "use",
            &args(&[("item", "bucket"), ("on", "well")]),
        );
        assert!(used.success, "{used}");
        assert_eq!(w.entity("bucket").unwrap().attributes["filled"], "true");
        w.step("player", "move", &args(&[("to", "square")]));
        assert!(
            !w.step(
                "player",
                "give",
                &args(&[("item", "bucket"), ("to", "smith")])
            )
            .success
        );
        w.step("player", "move", &args(&[("to", "forge")]));
        assert!(
            w.step(
                "player",
                "give",
                &args(&[("item", "bucket"), ("to", "smith")])
            )
            .success
        );
        assert_eq!(w.inventory("smith"), ["bucket", "hammer"]);
    }

    #[test]
    fn observation_rules() {
        let mut w = village();
        let obs = w.observe("player").unwrap();
        assert_eq!(obs.items.len(), 1);
        assert_eq!(obs.items[0].kind, ObservationKind::EntitySeen);
        assert_eq!(obs.items[0].subject, "bucket");
        w.step("smith", "move", &args(&[("to", "square")]));
        w.step("smith", "say", &args(&[("text", "hello")]));
        let obs = w.observe("player").unwrap();
        let heard: Vec<_> = obs
            .items
            .iter()
            .filter(|i| i.kind == ObservationKind::UtteranceHeard)
            .collect();
        assert_eq!(heard.len(), 1);
        assert_eq!(heard[0].detail, "hello");
        let again = w.observe("player").unwrap();
        assert!(again
            .items
            .iter()
            .all(|i| i.kind == ObservationKind::EntitySeen));
        assert_eq!(
            w.observe("ghost"),
            Err(WorldError::UnknownCharacter("ghost".into()))
        );
    }

    #[test]
    fn snapshots_are_independent() {
        let w = village();
        let live_hash = w.hash();
        let mut clone = w.snapshot();
        clone.step("player", "pick_up", &args(&[("item", "bucket")]));
        assert_ne!(clone.hash(), live_hash);
        assert_eq!(w.hash(), live_hash);
        clone.restore(&w);
        assert_eq!(clone.hash(), live_hash);
        assert_eq!(w.snapshot().snapshot().hash(), live_hash);
    }

    #[test]
    fn invalid_specs() {
        let spec = WorldSpec {
            locations: vec!["a".into()],
            adjacency: vec![["a".into(), "b".into()]],
            ..Default::default()
        };
        assert!(WorldState::from_spec(&spec).is_err());
        assert!(WorldState::from_spec(&WorldSpec::default()).is_err());
    }

    fn action() -> impl Strategy<Value = (usize, usize, usize, usize)> {
        (0usize..3, 0usize..7, 0usize..8, 0usize..8)
    }

    proptest! {
        #[test]
        fn items_conserved_and_observations_local(actions in prop::collection::vec(action(), 0..120)) {
            let mut w = village();
            let chars = ["smith", "player", "miller"];
            let names = ["square", "forge", "well", "mill", "bucket", "hammer", "coin", "smith"];
            let items_before: BTreeSet<String> =
                w.entities().filter(|e| e.kind == EntityKind::Item).map(|e| e.id.clone()).collect();
            for (c, a, x, y) in actions {
                let who = chars[c];
                let (api, a) = match a {
                    0 => ("move", args(&[("to", names[x])])),
                    1 => ("pick_up", args(&[("item", names[x])])),
                    2 => ("drop", args(&[("item", names[x])])),
                    3 => ("give", args(&[("item", names[x]), ("to", chars[y % 3])])),
                    4 => ("use", args(&[("item", names[x]), ("on", names[y])])),
                    5 => ("say", args(&[("text", "hi")])),
                    _ => ("wait", Args::new()),
                };
                w.step(who, api, &a);
                let observer = chars[(c + 1) % 3];
                let obs = w.observe(observer).unwrap();
                let here = w.location_of(observer).unwrap().to_string();
                for item in &obs.items {
                    if item.kind == ObservationKind::EntitySeen {
                        prop_assert_eq!(w.location_of(&item.subject), Some(here.as_str()));
                    }
                }
            }
            let items_after: BTreeSet<String> =
                w.entities().filter(|e| e.kind == EntityKind::Item).map(|e| e.id.clone()).collect();
            prop_assert_eq!(items_before, items_after);
            for e in w.entities() {
                if let Placement::HeldBy(holder) = &e.placement {
                    prop_assert_eq!(w.entity(holder).map(|h| h.kind), Some(EntityKind::Character));
                }
            }
        }
    }
}
