//! The semantic-memory language.
//!
//! A function-free Datalog with independent probabilistic facts:
//!
//! ```text
//! program  := { clause }
//! clause   := [ prob "::" ] atom "."                 ; fact (ground)
//!           | atom ":-" atom { "," atom } "."        ; rule
//! query    := atom "?"
//! atom     := PRED [ "(" term { "," term } ")" ]
//! term     := CONST | STRING | INTEGER | VAR
//! PRED     := [a-z][A-Za-z0-9_]*
//! CONST    := [a-z][A-Za-z0-9_]*
//! VAR      := [A-Z_][A-Za-z0-9_]*                    ; "_" alone is anonymous
//! STRING   := '"' { char | '\"' | '\\' | '\n' } '"'
//! INTEGER  := [ "-" ] [0-9]+
//! prob     := [0-9]+ [ "." [0-9]+ ]                  ; in (0, 1]
//! ```
//!
//! `%` starts a comment running to the end of the line. Whitespace is insignificant.
//! Queries are answered exactly by enumerating the truth assignments of the
//! probabilistic facts that can influence them (see [`evaluate`]).

mod eval;
mod kb;
mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use eval::{evaluate, evaluate_with_limit, DEFAULT_PROBABILISTIC_LIMIT};
pub use kb::KnowledgeBase;
pub use parser::{parse_atom, parse_program, parse_query};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constant {
    Symbol(String),
    Str(String),
    Int(i64),
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Symbol(s) => f.write_str(s),
            Constant::Int(i) => write!(f, "{i}"),
            Constant::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(Constant),
    Var(String),
}

impl Term {
    pub fn sym(name: &str) -> Self {
        Term::Const(Constant::Symbol(name.to_string()))
    }

    pub fn var(name: &str) -> Self {
        Term::Var(name.to_string())
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => c.fmt(f),
            Term::Var(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Self {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        !self.args.iter().any(Term::is_var)
    }

    /// Variables in order of first occurrence.
    pub fn variables(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for arg in &self.args {
            if let Term::Var(v) = arg {
                if !seen.contains(&v.as_str()) {
                    seen.push(v);
                }
            }
        }
        seen
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, arg) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                arg.fmt(f)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub head: Atom,
    pub body: Vec<Atom>,
    pub probability: f64,
}

impl Clause {
    pub fn fact(head: Atom) -> Self {
        Self {
            head,
            body: Vec::new(),
            probability: 1.0,
        }
    }

    pub fn probabilistic(head: Atom, probability: f64) -> Self {
        Self {
            head,
            body: Vec::new(),
            probability,
        }
    }

    pub fn rule(head: Atom, body: Vec<Atom>) -> Self {
        Self {
            head,
            body,
            probability: 1.0,
        }
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    pub fn is_probabilistic(&self) -> bool {
        self.is_fact() && self.probability < 1.0
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.probability < 1.0 {
            write!(f, "{}::", self.probability)?;
        }
        self.head.fmt(f)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, atom) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                atom.fmt(f)?;
            }
        }
        f.write_str(".")
    }
}

/// Renders clauses one per line in a form [`parse_program`] reads back unchanged.
pub fn pretty_print(clauses: &[Clause]) -> String {
    let mut out = String::new();
    for clause in clauses {
        out.push_str(&clause.to_string());
        out.push('\n');
    }
    out
}

pub type Bindings = BTreeMap<String, Constant>;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub bindings: Bindings,
    pub probability: f64,
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        write!(f, "}} p={}", self.probability)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogicError {
    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("predicate `{predicate}` used with arity {found}, previously {expected}")]
    ArityConflict {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("{count} probabilistic facts exceed the limit of {limit}")]
    TooManyProbabilisticFacts { count: usize, limit: usize },
}
