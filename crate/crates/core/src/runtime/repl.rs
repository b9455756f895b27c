//! Interactive command language shared by the REPL and run scripts.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;

use super::{Session, Store};
use crate::action::{parse_script, Call, Stmt};

pub const HELP: &str = "\
commands:
  say <text>                      speak to everyone at your location
  do <api>(<name>=<value>, ...)   perform a public action, e.g. do move(to=\"well\")
  wait                            let a tick pass
  inspect <character> <store>     show wm, ltm, kb or skills of a character
  save <path>                     write a state bundle
  load <path>                     restore a state bundle
  help                            show this text
  quit                            leave";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Say(String),
    Do(Call),
    Wait,
    Inspect { character: String, store: Store },
    Save(PathBuf),
    Load(PathBuf),
    Help,
    Quit,
}

impl Command {
    pub fn parse(line: &str) -> Result<Self, String> {
        let line = line.trim();
        let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let no_args = |c: Command| {
            if rest.is_empty() {
                Ok(c)
            } else {
                Err(format!("`{word}` takes no arguments"))
            }
        };
        match word {
            "say" if rest.is_empty() => Err("say what?".into()),
            "say" => Ok(Command::Say(rest.into())),
            "do" => parse_call(rest).map(Command::Do),
            "wait" => no_args(Command::Wait),
            "help" | "?" => no_args(Command::Help),
            "quit" | "exit" => no_args(Command::Quit),
            "inspect" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                match parts[..] {
                    [character, store] => Ok(Command::Inspect {
                        character: character.into(),
                        store: store.parse()?,
                    }),
                    _ => Err("usage: inspect <character> <wm|ltm|kb|skills>".into()),
                }
            }
            "save" | "load" if rest.is_empty() => Err(format!("usage: {word} <path>")),
            "save" => Ok(Command::Save(rest.into())),
            "load" => Ok(Command::Load(rest.into())),
            "" => Err("empty command".into()),
            other => Err(format!("unknown command `{other}`; type `help`")),
        }
    }

    /// True for commands that make the player act and so advance the world.
    pub fn is_action(&self) -> bool {
        matches!(self, Command::Say(_) | Command::Do(_) | Command::Wait)
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Say(text) => write!(f, "say {text}"),
            Command::Do(call) => write!(f, "do {call}"),
            Command::Wait => f.write_str("wait"),
            Command::Inspect { character, store } => write!(f, "inspect {character} {store}"),
            Command::Save(p) => write!(f, "save {}", p.display()),
            Command::Load(p) => write!(f, "load {}", p.display()),
            Command::Help => f.write_str("help"),
            Command::Quit => f.write_str("quit"),
        }
    }
}

fn parse_call(text: &str) -> Result<Call, String> {
    if text.is_empty() {
        return Err("usage: do <api>(<name>=<value>, ...)".into());
    }
    let script = parse_script(&format!("seq {{ call {text} }}"))
        .map_err(|e| format!("bad call `{text}`: {e}"))?;
    match <[Stmt; 1]>::try_from(script.body) {
        Ok([Stmt::Call(call)]) => Ok(call),
        _ => Err(format!("`{text}` is not a single call")),
    }
}

/// Reads commands until `quit` or end of input. Errors from a turn are printed and
/// leave the session as it was before the command.
pub fn run_repl<R: BufRead, W: Write>(
    session: &mut Session,
    input: R,
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "{}", session.world.describe())?;
    writeln!(out, "type `help` for commands")?;
    let mut lines = input.lines();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let Some(line) = lines.next() else { break };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let command = match Command::parse(&line) {
            Ok(c) => c,
            Err(e) => {
                writeln!(out, "{e}")?;
                continue;
            }
        };
        match command {
            Command::Quit => break,
            Command::Help => writeln!(out, "{HELP}")?,
            Command::Inspect { character, store } => match session.inspect(&character, store) {
                Ok(text) => writeln!(out, "{}", text.trim_end())?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
            Command::Save(path) => match session.save_bundle(&path) {
                Ok(()) => writeln!(out, "saved {}", path.display())?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
            Command::Load(path) => match session.load_bundle(&path) {
                Ok(()) => writeln!(out, "loaded {} (turn {})", path.display(), session.turn())?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
            action => match session.play_turn(0, std::slice::from_ref(&action)) {
                Ok(lines) => {
                    for line in &lines {
                        if let Some(text) = line.narrate() {
                            writeln!(out, "{text}")?;
                        }
                    }
                }
                Err(e) => writeln!(out, "error: {e}")?,
            },
        }
    }
    Ok(())
}
