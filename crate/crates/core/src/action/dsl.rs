//! The bounded action-script language.
//!
//! ```text
//! script  := "seq" "{" stmt* "}"
//! stmt    := call | if | repeat
//! call    := "call" IDENT "(" [arg ("," arg)*] ")"
//! arg     := IDENT "=" (STRING | INTEGER)
//! if      := "if" ["call"] IDENT "(" [arg ("," arg)*] ")" "{" stmt* "}" ["else" "{" stmt* "}"]
//! repeat  := "repeat" INTEGER "{" stmt* "}"
//! ```
//!
//! Strings are double-quoted with `\"`, `\\` and `\n` escapes; integers may carry
//! a leading `-`. `#` starts a comment running to the end of the line. Scripts are
//! limited to [`MAX_DEPTH`] levels of nesting (the outer `seq` is level 1),
//! [`MAX_CALLS`] call sites (conditions included) and repeat counts of at most
//! [`MAX_REPEAT`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::world::{format_call, Args, Value};

pub const MAX_DEPTH: usize = 8;
pub const MAX_CALLS: usize = 64;
pub const MAX_REPEAT: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub api: String,
    pub args: Args,
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_call(&self.api, &self.args))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Call(Call),
    If {
        cond: Call,
        then: Vec<Stmt>,
        otherwise: Option<Vec<Stmt>>,
    },
    Repeat {
        count: u32,
        body: Vec<Stmt>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SkillScript {
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("bounds exceeded: {0}")]
    BoundsExceeded(String),
}

impl SkillScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        parse_script(text)
    }

    /// Every call site in source order, conditions included.
    pub fn calls(&self) -> Vec<&Call> {
        fn walk<'a>(stmts: &'a [Stmt], out: &mut Vec<&'a Call>) {
            for s in stmts {
                match s {
                    Stmt::Call(c) => out.push(c),
                    Stmt::If {
                        cond,
                        then,
                        otherwise,
                    } => {
                        out.push(cond);
                        walk(then, out);
                        if let Some(o) = otherwise {
                            walk(o, out);
                        }
                    }
                    Stmt::Repeat { body, .. } => walk(body, out),
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }

    /// Nesting depth, counting the outer `seq` as 1.
    pub fn depth(&self) -> usize {
        fn depth(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::Call(_) => 0,
                    Stmt::If {
                        then, otherwise, ..
                    } => 1 + depth(then).max(otherwise.as_deref().map_or(0, depth)),
                    Stmt::Repeat { body, .. } => 1 + depth(body),
                })
                .max()
                .unwrap_or(0)
        }
        1 + depth(&self.body)
    }

    pub fn check_bounds(&self) -> Result<(), ScriptError> {
        let depth = self.depth();
        if depth > MAX_DEPTH {
            return Err(ScriptError::BoundsExceeded(format!(
                "nesting depth {depth} exceeds {MAX_DEPTH}"
            )));
        }
        let calls = self.calls().len();
        if calls > MAX_CALLS {
            return Err(ScriptError::BoundsExceeded(format!(
                "{calls} call sites exceed {MAX_CALLS}"
            )));
        }
        Ok(())
    }

    /// Canonical multi-line form; parsing it gives back the same script.
    pub fn pretty(&self) -> String {
        let mut out = String::from("seq {\n");
        pretty_block(&self.body, 1, &mut out);
        out.push('}');
        out
    }
}

impl fmt::Display for SkillScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pretty())
    }
}

impl From<SkillScript> for String {
    fn from(script: SkillScript) -> String {
        script.pretty()
    }
}

impl TryFrom<String> for SkillScript {
    type Error = ScriptError;

    fn try_from(text: String) -> Result<Self, ScriptError> {
        parse_script(&text)
    }
}

fn pretty_block(stmts: &[Stmt], indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    for s in stmts {
        match s {
            Stmt::Call(c) => out.push_str(&format!("{pad}call {c}\n")),
            Stmt::If {
                cond,
                then,
                otherwise,
            } => {
                out.push_str(&format!("{pad}if {cond} {{\n"));
                pretty_block(then, indent + 1, out);
                out.push_str(&pad);
                out.push('}');
                if let Some(o) = otherwise {
                    out.push_str(" else {\n");
                    pretty_block(o, indent + 1, out);
                    out.push_str(&pad);
                    out.push('}');
                }
                out.push('\n');
            }
            Stmt::Repeat { count, body } => {
                out.push_str(&format!("{pad}repeat {count} {{\n"));
                pretty_block(body, indent + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Equals,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(_) => f.write_str("string"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Equals => f.write_str("`=`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ScriptError> {
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut out = Vec::new();
    let err = |line, column, message: String| ScriptError::Parse {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let advance = |i: &mut usize, line: &mut usize, col: &mut usize| {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col);
            }
            continue;
        }
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '=' => Tok::Equals,
            '"' => {
                advance(&mut i, &mut line, &mut col);
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => {
                            return Err(err(start_line, start_col, "unterminated string".into()))
                        }
                        Some('"') => break,
                        Some('\\') => {
                            advance(&mut i, &mut line, &mut col);
                            match chars.get(i) {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                _ => return Err(err(line, col, "unknown escape in string".into())),
                            }
                        }
                        Some(&ch) => s.push(ch),
                    }
                    advance(&mut i, &mut line, &mut col);
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut s = String::from(c);
                while chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                    advance(&mut i, &mut line, &mut col);
                    s.push(chars[i]);
                }
                Tok::Int(
                    s.parse()
                        .map_err(|_| err(start_line, start_col, format!("bad integer `{s}`")))?,
                )
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::from(c);
                while chars
                    .get(i + 1)
                    .is_some_and(|d| d.is_alphanumeric() || *d == '_')
                {
                    advance(&mut i, &mut line, &mut col);
                    s.push(chars[i]);
                }
                Tok::Ident(s)
            }
            other => return Err(err(line, col, format!("unexpected character `{other}`"))),
        };
        advance(&mut i, &mut line, &mut col);
        out.push(Spanned {
            tok,
            line: start_line,
            column: start_col,
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn error(&self, expected: &str) -> ScriptError {
        let t = &self.toks[self.pos];
        ScriptError::Parse {
            line: t.line,
            column: t.column,
            message: format!("expected {expected}, found {}", t.tok),
        }
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].tok.clone();
        if tok != Tok::Eof {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ScriptError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn keyword(&mut self, word: &str) -> Result<(), ScriptError> {
        match self.peek() {
            Tok::Ident(s) if s == word => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error(&format!("`{word}`"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ScriptError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ScriptError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(stmts);
                }
                Tok::Ident(w) if w == "call" => {
                    self.bump();
                    stmts.push(Stmt::Call(self.call_body()?));
                }
                Tok::Ident(w) if w == "if" => {
                    self.bump();
                    if matches!(self.peek(), Tok::Ident(w) if w == "call") {
                        self.bump();
                    }
                    let cond = self.call_body()?;
                    let then = self.block()?;
                    let otherwise = match self.peek() {
                        Tok::Ident(w) if w == "else" => {
                            self.bump();
                            Some(self.block()?)
                        }
                        _ => None,
                    };
                    stmts.push(Stmt::If {
                        cond,
                        then,
                        otherwise,
                    });
                }
                Tok::Ident(w) if w == "repeat" => {
                    self.bump();
                    let count = match self.peek().clone() {
                        Tok::Int(n) if (0..=i64::from(MAX_REPEAT)).contains(&n) => {
                            self.bump();
                            n as u32
                        }
                        Tok::Int(n) => {
                            return Err(ScriptError::BoundsExceeded(format!(
                                "repeat count {n} outside 0..={MAX_REPEAT}"
                            )))
                        }
                        _ => return Err(self.error("a literal repeat count")),
                    };
                    stmts.push(Stmt::Repeat {
                        count,
                        body: self.block()?,
                    });
                }
                _ => return Err(self.error("`call`, `if`, `repeat` or `}`")),
            }
        }
    }

    fn call_body(&mut self) -> Result<Call, ScriptError> {
        let api = self.ident("an API name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Args::new();
        if *self.peek() != Tok::RParen {
            loop {
                let at = self.pos;
                let name = self.ident("an argument name")?;
                self.expect(Tok::Equals, "`=`")?;
                let value = match self.bump() {
                    Tok::Str(s) => Value::Str(s),
                    Tok::Int(i) => Value::Int(i),
                    _ => {
                        self.pos -= 1;
                        return Err(self.error("a string or integer"));
                    }
                };
                if args.insert(name.clone(), value).is_some() {
                    let t = &self.toks[at];
                    return Err(ScriptError::Parse {
                        line: t.line,
                        column: t.column,
                        message: format!("duplicate argument `{name}`"),
                    });
                }
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        Ok(Call { api, args })
    }
}

/// Parses and bounds-checks a script.
pub fn parse_script(text: &str) -> Result<SkillScript, ScriptError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    p.keyword("seq")?;
    let body = p.block()?;
    p.expect(Tok::Eof, "end of input")?;
    let script = SkillScript { body };
    script.check_bounds()?;
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_forms() {
        let s = parse_script("seq { call wait() }").unwrap();
        assert_eq!(s.calls().len(), 1);
        let s = parse_script("seq { repeat 3 { call wait() } }").unwrap();
        assert!(matches!(s.body[0], Stmt::Repeat { count: 3, .. }));
        let s = parse_script(r#"seq { call move(to="well") call use(item="bucket", on="well") }"#)
            .unwrap();
        assert_eq!(s.calls()[1].to_string(), r#"use(item="bucket", on="well")"#);
        let s = parse_script(
            r#"seq { if has(item="bucket") { call drop(item="bucket") } else { call wait() } }"#,
        )
        .unwrap();
        assert_eq!(s.calls().len(), 3);
        assert_eq!(s.depth(), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_script("seq { repeat n { call wait() } }"),
            Err(ScriptError::Parse { message, .. }) if message.contains("literal repeat count")
        ));
        assert!(matches!(
            parse_script("seq { repeat 33 { } }"),
            Err(ScriptError::BoundsExceeded(_))
        ));
        match parse_script("seq {\n  call move(to=)\n}") {
            Err(ScriptError::Parse {
                line,
                column,
                message,
            }) => {
                assert_eq!((line, column), (2, 16));
                assert!(message.contains("string or integer"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_script("seq { call wait() } extra").is_err());
        assert!(parse_script(r#"seq { call say(text="a", text="b") }"#).is_err());
        assert!(parse_script("call wait()").is_err());
    }

    #[test]
    fn depth_limit() {
        let nest = |n: usize| {
            format!(
                "seq {{ {} call wait() {} }}",
                "repeat 1 { ".repeat(n),
                "} ".repeat(n)
            )
        };
        assert!(parse_script(&nest(7)).is_ok());
        assert!(matches!(
            parse_script(&nest(8)),
            Err(ScriptError::BoundsExceeded(_))
        ));
    }

    #[test]
    fn call_limit() {
        let calls = |n: usize| format!("seq {{ {} }}", "call wait() ".repeat(n));
        assert!(parse_script(&calls(64)).is_ok());
        assert!(matches!(
            parse_script(&calls(65)),
            Err(ScriptError::BoundsExceeded(_))
        ));
    }

    fn arb_stmt() -> impl Strategy<Value = Stmt> {
        let call = (
            prop::sample::select(vec!["wait", "move", "say", "has"]),
            prop::collection::btree_map(
                "[a-z]{1,4}",
                prop_oneof![
                    any::<i64>().prop_map(Value::Int),
                    "[ -~]{0,6}".prop_map(Value::Str)
                ],
                0..3,
            ),
        )
            .prop_map(|(api, args)| Call {
                api: api.to_string(),
                args,
            });
        let leaf = call.clone().prop_map(Stmt::Call);
        leaf.prop_recursive(4, 24, 4, move |inner| {
            prop_oneof![
                (0u32..=32, prop::collection::vec(inner.clone(), 0..3))
                    .prop_map(|(count, body)| Stmt::Repeat { count, body }),
                (
                    call.clone(),
                    prop::collection::vec(inner.clone(), 0..3),
                    prop::option::of(prop::collection::vec(inner, 0..3))
                )
                    .prop_map(|(cond, then, otherwise)| Stmt::If {
                        cond,
                        then,
                        otherwise
                    }),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(body in prop::collection::vec(arb_stmt(), 0..4)) {
            let script = SkillScript { body };
            prop_assume!(script.check_bounds().is_ok());
            prop_assert_eq!(parse_script(&script.pretty()).unwrap(), script);
        }
    }
}
