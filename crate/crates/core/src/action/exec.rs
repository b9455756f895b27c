//! Verification (parse, schema, dry run) and execution of action scripts.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::dsl::{parse_script, Call, SkillScript, Stmt};
use crate::world::{ActionOutcome, ApiSpec, WorldState};

/// Upper bound on executed calls per script run, counting repeats and skill expansions.
pub const EXECUTION_BUDGET: usize = 1024;
/// Personal skills may call other skills up to this depth.
pub const MAX_SKILL_EXPANSION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    None,
    Parse,
    Schema,
    DryRun,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::None => "none",
            Stage::Parse => "parse",
            Stage::Schema => "schema",
            Stage::DryRun => "dry_run",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub parse_ok: bool,
    pub schema_ok: bool,
    pub dry_run_ok: bool,
    pub failure_stage: Stage,
    pub message: String,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failure_stage == Stage::None
    }

    fn fail(stage: Stage, message: String) -> Self {
        Self {
            parse_ok: stage != Stage::Parse,
            schema_ok: !matches!(stage, Stage::Parse | Stage::Schema),
            dry_run_ok: false,
            failure_stage: stage,
            message,
        }
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            f.write_str("verified")
        } else {
            write!(f, "{} failed: {}", self.failure_stage, self.message)
        }
    }
}

/// The APIs one character may call: the public set plus its own cached skills.
#[derive(Debug, Clone, Default)]
pub struct ActionSpace {
    pub specs: Vec<ApiSpec>,
    pub skills: BTreeMap<String, SkillScript>,
}

impl ActionSpace {
    pub fn public() -> Self {
        Self {
            specs: crate::world::public_api_registry(),
            skills: BTreeMap::new(),
        }
    }

    pub fn spec(&self, name: &str) -> Option<&ApiSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Prompt listing, one spec per line.
    pub fn listing(&self) -> String {
        let lines: Vec<String> = self.specs.iter().map(|s| format!("- {s}")).collect();
        lines.join("\n")
    }

    fn check_call(&self, call: &Call, as_condition: bool) -> Result<(), String> {
        let spec = self
            .spec(&call.api)
            .ok_or_else(|| format!("unknown API `{}` in {call}", call.api))?;
        if as_condition && spec.mutating {
            return Err(format!(
                "`{}` is an action and cannot be used as a condition",
                call.api
            ));
        }
        if !as_condition && !spec.mutating {
            return Err(format!(
                "`{}` is a predicate and can only be used as a condition",
                call.api
            ));
        }
        spec.check_args(&call.args)
            .map_err(|e| format!("{e} in {call}"))
    }

    /// Schema stage: every call names a known API with the right arguments.
    pub fn check_schema(&self, script: &SkillScript) -> Result<(), String> {
        fn walk(space: &ActionSpace, stmts: &[Stmt]) -> Result<(), String> {
            for s in stmts {
                match s {
                    Stmt::Call(c) => space.check_call(c, false)?,
                    Stmt::If {
                        cond,
                        then,
                        otherwise,
                    } => {
                        space.check_call(cond, true)?;
                        walk(space, then)?;
                        if let Some(o) = otherwise {
                            walk(space, o)?;
                        }
                    }
                    Stmt::Repeat { body, .. } => walk(space, body)?,
                }
            }
            Ok(())
        }
        walk(self, &script.body)
    }
}

/// Result of running a script to completion or to its first failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub outcomes: Vec<ActionOutcome>,
    /// Calls that were not attempted because an earlier call failed.
    pub skipped: Vec<String>,
}

impl ExecutionReport {
    pub fn succeeded(&self) -> bool {
        self.outcomes.iter().all(|o| o.success)
    }

    pub fn failure(&self) -> Option<&ActionOutcome> {
        self.outcomes.iter().find(|o| !o.success)
    }
}

struct Runner<'a> {
    space: &'a ActionSpace,
    character: &'a str,
    budget: usize,
    report: ExecutionReport,
    halted: bool,
}

impl Runner<'_> {
    fn skip(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match s {
                Stmt::Call(c) => self.report.skipped.push(c.to_string()),
                Stmt::If {
                    cond,
                    then,
                    otherwise,
                } => {
                    self.report.skipped.push(format!("if {cond}"));
                    self.skip(then);
                    if let Some(o) = otherwise {
                        self.skip(o);
                    }
                }
                Stmt::Repeat { count, body } => {
                    self.report.skipped.push(format!("repeat {count}"));
                    self.skip(body);
                }
            }
        }
    }

    fn fail(&mut self, world: &WorldState, call: &Call, message: String) {
        self.report.outcomes.push(ActionOutcome {
            api: call.api.clone(),
            args: call.args.clone(),
            success: false,
            message,
            tick: world.clock(),
        });
        self.halted = true;
    }

    fn run(&mut self, world: &mut WorldState, stmts: &[Stmt], expansion: usize) {
        for (i, s) in stmts.iter().enumerate() {
            if self.halted {
                self.skip(&stmts[i..]);
                return;
            }
            match s {
                Stmt::Call(call) => self.call(world, call, expansion),
                Stmt::If {
                    cond,
                    then,
                    otherwise,
                } => match world.predicate(self.character, &cond.api, &cond.args) {
                    Ok(true) => self.run(world, then, expansion),
                    Ok(false) => {
                        if let Some(o) = otherwise {
                            self.run(world, o, expansion);
                        }
                    }
                    Err(message) => self.fail(world, cond, message),
                },
                Stmt::Repeat { count, body } => {
                    for _ in 0..*count {
                        if self.halted {
                            break;
                        }
                        self.run(world, body, expansion);
                    }
                }
            }
        }
    }

    fn call(&mut self, world: &mut WorldState, call: &Call, expansion: usize) {
        if self.budget == 0 {
            self.fail(
                world,
                call,
                format!("execution budget of {EXECUTION_BUDGET} calls exhausted"),
            );
            return;
        }
        self.budget -= 1;
        if let Some(skill) = self.space.skills.get(&call.api) {
            if expansion >= MAX_SKILL_EXPANSION {
                self.fail(world, call, "skills nested too deeply".into());
                return;
            }
            let body = skill.body.clone();
            self.run(world, &body, expansion + 1);
            return;
        }
        let outcome = world.step(self.character, &call.api, &call.args);
        self.halted = !outcome.success;
        self.report.outcomes.push(outcome);
    }
}

/// Applies `script` to `world` in order, halting at the first failed call.
pub fn execute(
    script: &SkillScript,
    space: &ActionSpace,
    world: &mut WorldState,
    character: &str,
) -> ExecutionReport {
    let mut runner = Runner {
        space,
        character,
        budget: EXECUTION_BUDGET,
        report: ExecutionReport {
            outcomes: Vec::new(),
            skipped: Vec::new(),
        },
        halted: false,
    };
    runner.run(world, &script.body, 0);
    runner.report
}

/// Schema check, then a dry run on a private copy of `world`.
pub fn verify(
    script: &SkillScript,
    space: &ActionSpace,
    world: &WorldState,
    character: &str,
) -> VerificationReport {
    if let Err(message) = space.check_schema(script) {
        return VerificationReport::fail(Stage::Schema, message);
    }
    let mut scratch = world.snapshot();
    let report = execute(script, space, &mut scratch, character);
    if let Some(failed) = report.failure() {
        return VerificationReport::fail(Stage::DryRun, format!("dry run: {failed}"));
    }
    VerificationReport {
        parse_ok: true,
        schema_ok: true,
        dry_run_ok: true,
        failure_stage: Stage::None,
        message: format!("{} calls succeeded in dry run", report.outcomes.len()),
    }
}

/// Parses `text` and verifies the result.
pub fn verify_text(
    text: &str,
    space: &ActionSpace,
    world: &WorldState,
    character: &str,
) -> (Option<SkillScript>, VerificationReport) {
    match parse_script(text) {
        Ok(script) => {
            let report = verify(&script, space, world, character);
            (Some(script), report)
        }
        Err(e) => (None, VerificationReport::fail(Stage::Parse, e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::WorldSpec;

    fn world() -> WorldState {
        let spec: WorldSpec = toml::from_str(
            r#"
            locations = ["forge", "square", "well"]
            adjacency = [["forge", "square"], ["square", "well"]]
            characters = [{ id = "smith", location = "square" }]
            items = [{ id = "bucket", location = "well" }]
            use_rules = [{ item = "bucket", on = "well", sets = { filled = "true" } }]
            "#,
        )
        .unwrap();
        WorldState::from_spec(&spec).unwrap()
    }

    fn check(text: &str) -> VerificationReport {
        verify_text(text, &ActionSpace::public(), &world(), "smith").1
    }

    #[test]
    fn stages() {
        let r = check("seq { call fly() }");
        assert_eq!(
            (r.parse_ok, r.schema_ok, r.failure_stage),
            (true, false, Stage::Schema)
        );
        let r = check("seq { call move(to=\"well\") }");
        assert!(r.passed() && r.dry_run_ok, "{r}");
        let r = check("seq { call pick_up(item=\"bucket\") }");
        assert_eq!(r.failure_stage, Stage::DryRun);
        assert!(
            r.message.contains("pick_up(item=\"bucket\")"),
            "{}",
            r.message
        );
        let r = check("seq { call move(to= }");
        assert_eq!((r.parse_ok, r.failure_stage), (false, Stage::Parse));
        assert_eq!(
            check("seq { call has(item=\"bucket\") }").failure_stage,
            Stage::Schema
        );
        assert_eq!(check("seq { if wait() { } }").failure_stage, Stage::Schema);
        assert_eq!(
            check("seq { call move(destination=\"well\") }").failure_stage,
            Stage::Schema
        );
    }

    #[test]
    fn dry_run_leaves_world_alone() {
        let w = world();
        let before = w.hash();
        let (_, r) = verify_text(
            "seq { call move(to=\"well\") call pick_up(item=\"bucket\") }",
            &ActionSpace::public(),
            &w,
            "smith",
        );
        assert!(r.passed());
        assert_eq!(w.hash(), before);
    }

    #[test]
    fn execution_follows_conditions_and_halts() {
        let mut w = world();
        let space = ActionSpace::public();
        let script = parse_script(
            r#"seq {
                if has(item="bucket") { call drop(item="bucket") }
                call move(to="well")
                call pick_up(item="bucket")
                call use(item="bucket", on="well")
            }"#,
        )
        .unwrap();
        let report = execute(&script, &space, &mut w, "smith");
        assert!(report.succeeded());
        assert_eq!(report.outcomes.len(), 3);
        assert_eq!(w.location_of("smith"), Some("well"));
        assert_eq!(w.entity("bucket").unwrap().attributes["filled"], "true");

        let script =
            parse_script(r#"seq { call move(to="forge") call wait() repeat 2 { call wait() } }"#)
                .unwrap();
        let report = execute(&script, &space, &mut w, "smith");
        assert!(!report.succeeded());
        assert_eq!(report.outcomes.len(), 1);
        assert_eq!(report.skipped, ["wait()", "repeat 2", "wait()"]);
    }

    #[test]
    fn budget_caps_long_runs() {
        let mut w = world();
        let text = format!(
            "seq {{ {} call wait() {} }}",
            "repeat 32 { ".repeat(3),
            "} ".repeat(3)
        );
        let script = parse_script(&text).unwrap();
        let report = execute(&script, &ActionSpace::public(), &mut w, "smith");
        assert_eq!(report.outcomes.len(), EXECUTION_BUDGET + 1);
        assert!(report.failure().unwrap().message.contains("budget"));
    }

    #[test]
    fn skills_expand_inline() {
        let mut space = ActionSpace::public();
        space
            .specs
            .push(ApiSpec::personal("skill_1", "smith", "fetch the bucket"));
        space.skills.insert(
            "skill_1".into(),
            parse_script(r#"seq { call move(to="well") call pick_up(item="bucket") }"#).unwrap(),
        );
        let mut w = world();
        let script = parse_script("seq { call skill_1() call move(to=\"square\") }").unwrap();
        assert!(verify(&script, &space, &w, "smith").passed());
        assert!(execute(&script, &space, &mut w, "smith").succeeded());
        assert_eq!(w.inventory("smith"), ["bucket"]);
        assert_eq!(check("seq { call skill_1() }").failure_stage, Stage::Schema);
    }
}
