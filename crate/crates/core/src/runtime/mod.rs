//! Scenario sessions: the turn loop, run transcripts and state bundles.
//!
//! Each turn applies the player's commands, then every NPC acts in character-id
//! order: expire working memory, observe, encode, reflect when working memory is
//! full, recall, decide, review the decision against the persona, act. An NPC that
//! observes nothing new only expires and (if due) reflects.

mod bundle;
pub mod repl;
mod scenario;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tracing::{info, warn};

pub use bundle::{AgentState, Bundle, LlmState, BUNDLE_MAGIC};
pub use repl::{run_repl, Command};
pub use scenario::{
    BackendSpec, CharacterSpec, Scenario, ScenarioError, TurnSpec, UnitsSpec, SCENARIO_HEADER,
};

use crate::action::{ActionError, Interaction, SkillLibrary, TaskReport, TrainingLog};
use crate::cognition::Cognition;
use crate::decision::{
    ConflictVerdict, Decision, DecisionEngine, DecisionError, DecisionKind, FALLBACK_UTTERANCE,
};
use crate::llm::{LlmBridge, LlmError, Prompts, Role};
use crate::logicql::KnowledgeBase;
use crate::ltm::NewRecord;
use crate::memory::{
    Encoded, Memory, MemoryError, RecallResult, ReflectionReport, FALLBACK_SALIENCE,
};
use crate::persona::Persona;
use crate::working_memory::{Producer, WorkingMemoryEntry};
use crate::world::{args, ActionOutcome, WorldState};
use crate::Tick;

pub const RUN_TRANSCRIPT_MAGIC: &str = "LARP-RUN-TRANSCRIPT 1";
/// Working-memory key holding the latest recall answer.
pub const RECALL_KEY: &str = "recall";
/// Importance of memories listed in the scenario file.
pub const INITIAL_MEMORY_IMPORTANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Store {
    Wm,
    Ltm,
    Kb,
    Skills,
}

impl FromStr for Store {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wm" => Ok(Store::Wm),
            "ltm" => Ok(Store::Ltm),
            "kb" => Ok(Store::Kb),
            "skills" => Ok(Store::Skills),
            other => Err(format!(
                "unknown store `{other}`, expected wm, ltm, kb or skills"
            )),
        }
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Store::Wm => "wm",
            Store::Ltm => "ltm",
            Store::Kb => "kb",
            Store::Skills => "skills",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Action(#[from] ActionError),
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cannot build backend: {0}")]
    Backend(#[source] LlmError),
    #[error("turn {turn} (tick {tick}), character `{character}`: {source}")]
    Agent {
        turn: u64,
        tick: Tick,
        character: String,
        #[source]
        source: AgentError,
    },
    #[error("`{0}` is not a player action")]
    NotAnAction(String),
    #[error("unknown character `{0}`")]
    UnknownCharacter(String),
    #[error("bundle: {0}")]
    Bundle(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RuntimeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TurnEvent {
    Player {
        command: String,
        outcome: ActionOutcome,
    },
    Observed {
        location: String,
        items: Vec<String>,
        digest: String,
    },
    Encoded {
        items: Vec<Encoded>,
    },
    Reflected {
        report: ReflectionReport,
    },
    Recalled {
        result: RecallResult,
    },
    Decided {
        attempt: u32,
        decision: Decision,
    },
    DecisionFailed {
        attempt: u32,
        error: String,
    },
    Reviewed {
        attempt: u32,
        verdict: ConflictVerdict,
    },
    Spoke {
        outcome: ActionOutcome,
    },
    Acted {
        report: TaskReport,
    },
    TurnEnd {
        world_hash: String,
        llm_calls: BTreeMap<Role, u64>,
    },
}

/// One line of a run transcript.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptLine {
    pub turn: u64,
    pub tick: Tick,
    pub actor: String,
    #[serde(flatten)]
    pub event: TurnEvent,
}

impl TranscriptLine {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript line serialises")
    }

    /// What a REPL user at `player` sees of this event, if anything.
    pub fn narrate(&self) -> Option<String> {
        match &self.event {
            TurnEvent::Player { outcome, .. } if !outcome.success => {
                Some(format!("({})", outcome.message))
            }
            TurnEvent::Player { outcome, .. } if outcome.api != "say" => {
                Some(outcome.message.clone())
            }
            TurnEvent::Spoke { outcome } if outcome.success => Some(format!(
                "{}: {}",
                self.actor,
                outcome
                    .args
                    .get("text")
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            )),
            TurnEvent::Acted { report } => {
                let status = if report.completed { "did" } else { "failed to" };
                Some(format!("[{} {status} {}]", self.actor, report.task))
            }
            _ => None,
        }
    }
}

/// An NPC: persona plus its memory and skills.
#[derive(Debug, Clone)]
pub struct Agent {
    pub persona: Persona,
    pub memory: Memory,
    pub skills: SkillLibrary,
}

/// Forgetting-sampler seed for one character: mixes the scenario seed, the
/// persona's own decay seed and the character id.
pub fn agent_seed(scenario_seed: u64, persona: &Persona) -> u64 {
    let digest =
        Sha256::digest(format!("{scenario_seed}:{}:{}", persona.decay.seed, persona.id).as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub struct Session {
    pub scenario: Scenario,
    pub world: WorldState,
    pub agents: BTreeMap<String, Agent>,
    bridge: LlmBridge,
    prompts: Prompts,
    engine: DecisionEngine,
    training: TrainingLog,
    turn: u64,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("scenario", &self.scenario.name)
            .field("turn", &self.turn)
            .finish()
    }
}

impl Session {
    /// Builds the backend the scenario names and starts at turn 0.
    pub fn new(scenario: Scenario) -> Result<Self, RuntimeError> {
        let config = scenario.backend_config().map_err(|message| ScenarioError {
            path: scenario.name.clone(),
            message,
        })?;
        let bridge = config.build().map_err(RuntimeError::Backend)?;
        Self::with_bridge(scenario, bridge)
    }

    pub fn with_bridge(scenario: Scenario, bridge: LlmBridge) -> Result<Self, RuntimeError> {
        let invalid = |message: String| {
            RuntimeError::Scenario(ScenarioError {
                path: scenario.name.clone(),
                message,
            })
        };
        let prompts = match scenario.prompts_dir() {
            Some(dir) => Prompts::with_overrides(&dir).map_err(RuntimeError::Backend)?,
            None => Prompts::builtin(),
        };
        let world = WorldState::from_spec(&scenario.world).map_err(|e| invalid(e.to_string()))?;

        let mut engine = DecisionEngine::new();
        engine.order_mode = scenario.units.order;
        engine.fail_closed = scenario.units.fail_closed;
        if !scenario.units.static_order.is_empty() {
            engine
                .set_static_order(scenario.units.static_order.clone())
                .map_err(|e| invalid(e.to_string()))?;
        }
        for id in &scenario.units.disabled {
            engine
                .set_enabled(id, false)
                .map_err(|e| invalid(e.to_string()))?;
        }

        let mut agents = BTreeMap::new();
        for spec in &scenario.characters {
            let id = spec.persona.id.clone();
            let mut memory = Memory::new(
                spec.working_memory,
                spec.memory,
                agent_seed(scenario.seed, &spec.persona),
            );
            memory.kb =
                KnowledgeBase::parse(&spec.facts).map_err(|e| invalid(format!("{id}: {e}")))?;
            for text in &spec.memories {
                memory
                    .ltm
                    .store(NewRecord::episodic(&id, text, INITIAL_MEMORY_IMPORTANCE, 0))
                    .map_err(|e| invalid(format!("{id}: {e}")))?;
            }
            let mut skills = SkillLibrary::new(&id);
            if let Some(t) = spec.skill_threshold {
                skills = skills.with_threshold(t);
            }
            agents.insert(
                id,
                Agent {
                    persona: spec.persona.clone(),
                    memory,
                    skills,
                },
            );
        }

        Ok(Self {
            scenario,
            world,
            agents,
            bridge,
            prompts,
            engine,
            training: TrainingLog::in_memory(),
            turn: 0,
        })
    }

    pub fn bridge(&self) -> &LlmBridge {
        &self.bridge
    }

    pub fn engine_mut(&mut self) -> &mut DecisionEngine {
        &mut self.engine
    }

    pub fn training(&self) -> &TrainingLog {
        &self.training
    }

    pub fn set_training_log(&mut self, log: TrainingLog) {
        self.training = log;
    }

    /// Completed turns.
    pub fn turn(&self) -> u64 {
        self.turn
    }

    /// Runs one turn. On error every change made by the turn is undone.
    pub fn play_turn(
        &mut self,
        advance: u64,
        commands: &[Command],
    ) -> Result<Vec<TranscriptLine>, RuntimeError> {
        if let Some(c) = commands.iter().find(|c| !c.is_action()) {
            return Err(RuntimeError::NotAnAction(c.to_string()));
        }
        let checkpoint = self.to_bundle();
        let result = self.turn_inner(advance, commands);
        if result.is_err() {
            self.restore(&checkpoint)
                .expect("checkpoint of this session restores");
        }
        result
    }

    fn turn_inner(
        &mut self,
        advance: u64,
        commands: &[Command],
    ) -> Result<Vec<TranscriptLine>, RuntimeError> {
        let turn = self.turn + 1;
        let mut lines = Vec::new();
        if advance > 0 {
            self.world.advance_to(self.world.clock() + advance);
        }
        let player = self.scenario.player.clone();
        for command in commands {
            let outcome = match command {
                Command::Say(text) => self.world.step(&player, "say", &args(&[("text", text)])),
                Command::Do(call) => self.world.step(&player, &call.api, &call.args),
                _ => self.world.step(&player, "wait", &Default::default()),
            };
            lines.push(self.line(
                turn,
                &player,
                TurnEvent::Player {
                    command: command.to_string(),
                    outcome,
                },
            ));
        }
        let ids: Vec<String> = self.agents.keys().cloned().collect();
        for id in ids {
            self.npc_turn(turn, &id, &mut lines)
                .map_err(|source| RuntimeError::Agent {
                    turn,
                    tick: self.world.clock(),
                    character: id.clone(),
                    source,
                })?;
        }
        let end = TurnEvent::TurnEnd {
            world_hash: self.world.hash(),
            llm_calls: self.bridge.call_counts(),
        };
        lines.push(self.line(turn, "world", end));
        self.turn = turn;
        Ok(lines)
    }

    fn line(&self, turn: u64, actor: &str, event: TurnEvent) -> TranscriptLine {
        TranscriptLine {
            turn,
            tick: self.world.clock(),
            actor: actor.into(),
            event,
        }
    }

    fn npc_turn(
        &mut self,
        turn: u64,
        id: &str,
        lines: &mut Vec<TranscriptLine>,
    ) -> Result<(), AgentError> {
        let Session {
            world,
            agents,
            bridge,
            prompts,
            engine,
            training,
            ..
        } = self;
        let agent = agents.get_mut(id).expect("agent exists");
        let cog = Cognition::new(bridge, prompts, &agent.persona);
        let memory = &mut agent.memory;
        let mut emit = |world: &WorldState, event: TurnEvent| {
            lines.push(TranscriptLine {
                turn,
                tick: world.clock(),
                actor: id.into(),
                event,
            })
        };

        memory.wm.expire(world.clock());
        let observation = world.observe(id).expect("agents are world characters");
        if !observation.items.is_empty() {
            let items = observation.items.iter().map(|i| i.to_string()).collect();
            emit(
                world,
                TurnEvent::Observed {
                    location: observation.location.clone(),
                    items,
                    digest: observation.digest(),
                },
            );
            let encoded = memory.encode_observation(&cog, &observation)?;
            emit(world, TurnEvent::Encoded { items: encoded });
        }
        if memory.wm.should_reflect() {
            let report = memory.reflect(&cog, world.clock())?;
            emit(world, TurnEvent::Reflected { report });
        }
        if observation.items.is_empty() {
            return Ok(());
        }

        let rendered = observation.render();
        let now = world.clock();
        let recall = memory.recall_loop(&cog, &rendered, now)?;
        let salience = recall
            .supporting_record_ids
            .iter()
            .filter_map(|id| memory.ltm.get(*id))
            .map(|r| r.importance)
            .fold(None, |acc: Option<f64>, x| {
                Some(acc.map_or(x, |a| a.max(x)))
            })
            .unwrap_or(FALLBACK_SALIENCE);
        memory.wm.put(WorkingMemoryEntry::new(
            RECALL_KEY,
            &recall.answer,
            Producer::Recall,
            now,
            salience,
        ));
        emit(world, TurnEvent::Recalled { result: recall });

        let mut chosen = None;
        for attempt in 1..=2 {
            let decision =
                match engine.run_pipeline(&cog, &rendered, &mut memory.wm, now, &mut |_| false) {
                    Ok(d) => d,
                    Err(DecisionError::MalformedFinalOutput(text)) => {
                        warn!(character = id, "unreadable final output");
                        emit(
                            world,
                            TurnEvent::DecisionFailed {
                                attempt,
                                error: format!("malformed final output: {text}"),
                            },
                        );
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
            emit(
                world,
                TurnEvent::Decided {
                    attempt,
                    decision: decision.clone(),
                },
            );
            let verdict = engine.check_conflict(&cog, &decision)?;
            let applied = verdict.apply(&decision);
            emit(world, TurnEvent::Reviewed { attempt, verdict });
            if applied.is_some() {
                chosen = applied;
                break;
            }
        }
        let decision = chosen.unwrap_or_else(|| {
            info!(character = id, "no acceptable decision, falling back");
            Decision::dialogue(FALLBACK_UTTERANCE)
        });

        match decision.kind {
            DecisionKind::Dialogue => {
                let outcome = world.step(id, "say", &args(&[("text", &decision.utterance)]));
                emit(world, TurnEvent::Spoke { outcome });
            }
            DecisionKind::TaskPlan => {
                let interaction = Interaction::new(cog);
                for task in &decision.tasks {
                    let report = interaction.perform(
                        task,
                        &mut memory.wm,
                        world,
                        &mut agent.skills,
                        training,
                    )?;
                    let completed = report.completed;
                    emit(world, TurnEvent::Acted { report });
                    if !completed {
                        break;
                    }
                }
            }
        }
        Ok(())
    }

    /// The scripted turn that would run next, if any.
    pub fn next_scripted_turn(&self) -> Option<(u64, Vec<Command>)> {
        let spec = self.scenario.turns.get(self.turn as usize)?;
        let commands = spec
            .player
            .iter()
            .map(|c| Command::parse(c).expect("run script validated at load"))
            .collect();
        Some((spec.advance, commands))
    }

    /// Plays the remaining scripted turns.
    pub fn run_script(&mut self) -> Result<Vec<TranscriptLine>, RuntimeError> {
        let mut lines = Vec::new();
        while let Some((advance, commands)) = self.next_scripted_turn() {
            lines.extend(self.play_turn(advance, &commands)?);
        }
        Ok(lines)
    }

    pub fn agent(&self, character: &str) -> Result<&Agent, RuntimeError> {
        self.agents
            .get(character)
            .ok_or_else(|| RuntimeError::UnknownCharacter(character.into()))
    }

    pub fn inspect(&self, character: &str, store: Store) -> Result<String, RuntimeError> {
        let agent = self.agent(character)?;
        Ok(match store {
            Store::Wm => agent.memory.wm.dump(),
            Store::Ltm => agent.memory.ltm.to_snapshot(),
            Store::Kb => agent.memory.kb.to_program(),
            Store::Skills => agent.skills.dump(),
        })
    }

    pub fn to_bundle(&self) -> Bundle {
        Bundle {
            scenario: self.scenario.name.clone(),
            turn: self.turn,
            world: self.world.clone(),
            agents: self
                .agents
                .iter()
                .map(|(id, a)| (id.clone(), AgentState::capture(a)))
                .collect(),
            llm: LlmState {
                counts: self.bridge.call_counts(),
                consumed: self.bridge.replay_state(),
            },
        }
    }

    /// Replaces the dynamic state with a bundle saved from this scenario.
    pub fn restore(&mut self, bundle: &Bundle) -> Result<(), RuntimeError> {
        if bundle.scenario != self.scenario.name {
            return Err(RuntimeError::Bundle(format!(
                "bundle is for scenario `{}`, not `{}`",
                bundle.scenario, self.scenario.name
            )));
        }
        if !bundle.agents.keys().eq(self.agents.keys()) {
            return Err(RuntimeError::Bundle(
                "bundle characters do not match the scenario".into(),
            ));
        }
        let mut agents = self.agents.clone();
        for (id, state) in &bundle.agents {
            state
                .apply(agents.get_mut(id).expect("keys match"))
                .map_err(RuntimeError::Bundle)?;
        }
        self.bridge
            .restore(&bundle.llm.counts, bundle.llm.consumed.as_deref())
            .map_err(|e| RuntimeError::Bundle(e.to_string()))?;
        self.agents = agents;
        self.world = bundle.world.clone();
        self.turn = bundle.turn;
        Ok(())
    }

    pub fn save_bundle(&self, path: &Path) -> Result<(), RuntimeError> {
        std::fs::write(path, self.to_bundle().to_text()).map_err(|e| RuntimeError::io(path, e))
    }

    pub fn load_bundle(&mut self, path: &Path) -> Result<(), RuntimeError> {
        let bundle = Bundle::load(path)?;
        self.restore(&bundle)
    }

    /// Digest of the complete dynamic state.
    pub fn state_hash(&self) -> String {
        self.to_bundle().hash()
    }
}

/// Options for [`run_to_dir`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Continue from this bundle instead of turn 0.
    pub resume: Option<PathBuf>,
    /// Also write `turn-<n>.bundle` after these turns.
    pub save_after: Vec<u64>,
}

/// What [`run_to_dir`] wrote.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub turns: u64,
    pub transcript: PathBuf,
    pub bundle: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub training_log: PathBuf,
}

/// Plays a scenario's run script and writes `transcript.jsonl`, `training.jsonl`,
/// `final.bundle` and one `<character>.ltm` snapshot per NPC into `out`.
pub fn run_to_dir(
    scenario: Scenario,
    out: &Path,
    options: &RunOptions,
) -> Result<RunSummary, RuntimeError> {
    let mut scenario = scenario;
    if let Some(seed) = options.seed {
        scenario.seed = seed;
    }
    std::fs::create_dir_all(out).map_err(|e| RuntimeError::io(out, e))?;
    let mut session = Session::new(scenario)?;
    if let Some(path) = &options.resume {
        session.load_bundle(path)?;
    }
    let training_log = out.join("training.jsonl");
    session.set_training_log(TrainingLog::create(&training_log).map_err(|e| match e {
        ActionError::Io { path, source } => RuntimeError::Io { path, source },
        other => RuntimeError::Bundle(other.to_string()),
    })?);

    let transcript = out.join("transcript.jsonl");
    let file = File::create(&transcript).map_err(|e| RuntimeError::io(&transcript, e))?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "{RUN_TRANSCRIPT_MAGIC}").map_err(|e| RuntimeError::io(&transcript, e))?;

    while let Some((advance, commands)) = session.next_scripted_turn() {
        let lines = session.play_turn(advance, &commands)?;
        for line in &lines {
            writeln!(writer, "{}", line.to_json()).map_err(|e| RuntimeError::io(&transcript, e))?;
        }
        writer
            .flush()
            .map_err(|e| RuntimeError::io(&transcript, e))?;
        if options.save_after.contains(&session.turn()) {
            session.save_bundle(&out.join(format!("turn-{}.bundle", session.turn())))?;
        }
    }

    let bundle = out.join("final.bundle");
    session.save_bundle(&bundle)?;
    let mut snapshots = Vec::new();
    for (id, agent) in &session.agents {
        let path = out.join(format!("{id}.ltm"));
        agent
            .memory
            .ltm
            .save(&path)
            .map_err(|e| RuntimeError::Bundle(e.to_string()))?;
        snapshots.push(path);
    }
    Ok(RunSummary {
        turns: session.turn(),
        transcript,
        bundle,
        snapshots,
        training_log,
    })
}
