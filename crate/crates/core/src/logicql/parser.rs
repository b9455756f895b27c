use std::collections::BTreeSet;

use super::lexer::{tokenize, Spanned, Token};
use super::{Atom, Clause, Constant, LogicError, Term};

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    anonymous: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, LogicError> {
        Ok(Self {
            tokens: tokenize(text)?,
            pos: 0,
            anonymous: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos].token
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.column)
    }

    fn bump(&mut self) -> Token {
        let token = self.tokens[self.pos].token.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        token
    }

    fn fail<T>(&self, expected: &str) -> Result<T, LogicError> {
        let (line, column) = self.here();
        Err(LogicError::Parse {
            line,
            column,
            message: format!("expected {expected}, found {}", self.peek().describe()),
        })
    }

    fn fail_at<T>(&self, (line, column): (usize, usize), message: String) -> Result<T, LogicError> {
        Err(LogicError::Parse {
            line,
            column,
            message,
        })
    }

    fn expect(&mut self, token: Token, expected: &str) -> Result<(), LogicError> {
        if *self.peek() == token {
            self.bump();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn atom(&mut self) -> Result<Atom, LogicError> {
        let predicate = match self.peek() {
            Token::Ident(name) => name.clone(),
            _ => return self.fail("predicate name"),
        };
        self.bump();
        let mut args = Vec::new();
        if *self.peek() == Token::LParen {
            self.bump();
            loop {
                args.push(self.term()?);
                match self.peek() {
                    Token::Comma => {
                        self.bump();
                    }
                    Token::RParen => {
                        self.bump();
                        break;
                    }
                    _ => return self.fail("`,` or `)`"),
                }
            }
        }
        Ok(Atom { predicate, args })
    }

    fn term(&mut self) -> Result<Term, LogicError> {
        let term = match self.peek() {
            Token::Ident(s) => Term::Const(Constant::Symbol(s.clone())),
            Token::Str(s) => Term::Const(Constant::Str(s.clone())),
            Token::Int(i) => Term::Const(Constant::Int(*i)),
            Token::Var(v) if v == "_" => {
                self.anonymous += 1;
                Term::Var(format!("_G{}", self.anonymous))
            }
            Token::Var(v) => Term::Var(v.clone()),
            _ => return self.fail("a term"),
        };
        self.bump();
        Ok(term)
    }

    fn clause(&mut self) -> Result<Clause, LogicError> {
        let start = self.here();
        let probability = match *self.peek() {
            Token::Number(p) => Some(p),
            Token::Int(i) => Some(i as f64),
            _ => None,
        };
        if let Some(p) = probability {
            self.bump();
            self.expect(Token::ColonColon, "`::` after probability")?;
            if !(p > 0.0 && p <= 1.0) {
                return self.fail_at(start, format!("probability {p} outside (0, 1]"));
            }
        }
        let head = self.atom()?;
        let mut body = Vec::new();
        if *self.peek() == Token::Implies {
            if probability.is_some() {
                return self.fail_at(
                    start,
                    "probabilistic rules are not allowed; only facts may carry a probability"
                        .into(),
                );
            }
            self.bump();
            loop {
                body.push(self.atom()?);
                match self.peek() {
                    Token::Comma => {
                        self.bump();
                    }
                    Token::Dot => break,
                    _ => return self.fail("`,` or `.`"),
                }
            }
        }
        self.expect(Token::Dot, "`.` ending the clause")?;
        if body.is_empty() {
            if !head.is_ground() {
                return self.fail_at(start, format!("fact `{head}` contains a variable"));
            }
        } else {
            let bound: BTreeSet<&str> = body.iter().flat_map(|a| a.variables()).collect();
            if let Some(free) = head.variables().into_iter().find(|v| !bound.contains(v)) {
                return self.fail_at(
                    start,
                    format!("unsafe rule: head variable `{free}` does not occur in the body"),
                );
            }
        }
        Ok(Clause {
            head,
            body,
            probability: probability.unwrap_or(1.0),
        })
    }
}

pub fn parse_program(text: &str) -> Result<Vec<Clause>, LogicError> {
    let mut parser = Parser::new(text)?;
    let mut clauses = Vec::new();
    while *parser.peek() != Token::Eof {
        clauses.push(parser.clause()?);
    }
    Ok(clauses)
}

/// Parses `atom?`.
pub fn parse_query(text: &str) -> Result<Atom, LogicError> {
    let mut parser = Parser::new(text)?;
    let atom = parser.atom()?;
    parser.expect(Token::Question, "`?` ending the query")?;
    if *parser.peek() != Token::Eof {
        return parser.fail("end of input after the query");
    }
    Ok(atom)
}

/// Parses a bare atom with no terminator, e.g. for retraction.
pub fn parse_atom(text: &str) -> Result<Atom, LogicError> {
    let mut parser = Parser::new(text)?;
    let atom = parser.atom()?;
    if *parser.peek() != Token::Eof {
        return parser.fail("end of input after the atom");
    }
    Ok(atom)
}
