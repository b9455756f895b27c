use std::collections::BTreeMap;

use super::{
    evaluate_with_limit, parse_program, pretty_print, Atom, Clause, LogicError, QueryResult,
};

/// A knowledge base: clauses in insertion order with one arity per predicate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    clauses: Vec<Clause>,
    arities: BTreeMap<String, usize>,
    probabilistic_limit: Option<usize>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_clauses(clauses: impl IntoIterator<Item = Clause>) -> Result<Self, LogicError> {
        let mut kb = Self::new();
        for clause in clauses {
            kb.assert_clause(clause)?;
        }
        Ok(kb)
    }

    pub fn parse(text: &str) -> Result<Self, LogicError> {
        Self::from_clauses(parse_program(text)?)
    }

    pub fn with_probabilistic_limit(mut self, limit: usize) -> Self {
        self.probabilistic_limit = Some(limit);
        self
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Predicates with their arities, sorted by name.
    pub fn signature(&self) -> &BTreeMap<String, usize> {
        &self.arities
    }

    fn check_arity(
        &self,
        atom: &Atom,
        pending: &BTreeMap<String, usize>,
    ) -> Result<(), LogicError> {
        let known = self
            .arities
            .get(&atom.predicate)
            .or_else(|| pending.get(&atom.predicate));
        match known {
            Some(&expected) if expected != atom.arity() => Err(LogicError::ArityConflict {
                predicate: atom.predicate.clone(),
                expected,
                found: atom.arity(),
            }),
            _ => Ok(()),
        }
    }

    /// Appends `clause` unless an identical clause is already present.
    /// Returns whether the knowledge base changed.
    pub fn assert_clause(&mut self, clause: Clause) -> Result<bool, LogicError> {
        let mut pending = BTreeMap::new();
        for atom in std::iter::once(&clause.head).chain(&clause.body) {
            self.check_arity(atom, &pending)?;
            pending.insert(atom.predicate.clone(), atom.arity());
        }
        if self.clauses.contains(&clause) {
            return Ok(false);
        }
        self.arities.extend(pending);
        self.clauses.push(clause);
        Ok(true)
    }

    /// Removes every fact whose head is exactly `atom`, whatever its probability.
    /// Returns the number of clauses removed.
    pub fn retract_fact(&mut self, atom: &Atom) -> usize {
        let before = self.clauses.len();
        self.clauses.retain(|c| !(c.is_fact() && c.head == *atom));
        before - self.clauses.len()
    }

    pub fn query(&self, query: &Atom) -> Result<Vec<QueryResult>, LogicError> {
        let limit = self
            .probabilistic_limit
            .unwrap_or(super::DEFAULT_PROBABILISTIC_LIMIT);
        evaluate_with_limit(query, &self.clauses, limit)
    }

    pub fn to_program(&self) -> String {
        pretty_print(&self.clauses)
    }
}
