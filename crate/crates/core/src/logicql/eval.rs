//! Exact query evaluation.
//!
//! 1. The deterministic facts, the heads of all probabilistic facts and the rules
//!    are saturated with semi-naive bottom-up evaluation. By monotonicity this
//!    "everything possible" model bounds every world.
//! 2. Rules are grounded against that model, giving a propositional program.
//! 3. Answers true with no probabilistic fact at all get probability exactly 1.
//!    For the rest, only the probabilistic facts reachable backwards from the
//!    answers matter; every truth assignment of those is enumerated and the
//!    propositional program is forward-chained in each world, summing world
//!    weights per answer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Bound;

use super::{Atom, Bindings, Clause, Constant, LogicError, QueryResult, Term};

pub const DEFAULT_PROBABILISTIC_LIMIT: usize = 20;

type Tuple = Vec<Constant>;
type RelKey = (String, usize);
type Relations = BTreeMap<RelKey, BTreeSet<Tuple>>;
type Subst<'a> = Vec<(&'a str, Constant)>;

fn key(atom: &Atom) -> RelKey {
    (atom.predicate.clone(), atom.arity())
}

fn ground_tuple(atom: &Atom) -> Tuple {
    atom.args
        .iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => panic!("fact contains variable {v}"),
        })
        .collect()
}

fn lookup<'s>(subst: &'s Subst<'_>, var: &str) -> Option<&'s Constant> {
    subst.iter().rev().find(|(v, _)| *v == var).map(|(_, c)| c)
}

/// Extends `subst` so that `atom` matches `tuple`; on failure `subst` is restored.
fn unify<'a>(atom: &'a Atom, tuple: &[Constant], subst: &mut Subst<'a>) -> bool {
    let mark = subst.len();
    for (term, value) in atom.args.iter().zip(tuple) {
        let ok = match term {
            Term::Const(c) => c == value,
            Term::Var(v) => match lookup(subst, v) {
                Some(bound) => bound == value,
                None => {
                    subst.push((v, value.clone()));
                    true
                }
            },
        };
        if !ok {
            subst.truncate(mark);
            return false;
        }
    }
    true
}

fn instantiate(atom: &Atom, subst: &Subst<'_>) -> Tuple {
    atom.args
        .iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => lookup(subst, v)
                .cloned()
                .expect("safe rule binds every head variable"),
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Source {
    Full,
    Delta,
    /// Full minus delta.
    Old,
}

struct Join<'r> {
    full: &'r Relations,
    delta: &'r Relations,
}

impl<'r> Join<'r> {
    fn solve<'a>(
        &self,
        body: &'a [Atom],
        index: usize,
        source: &dyn Fn(usize) -> Source,
        subst: &mut Subst<'a>,
        emit: &mut dyn FnMut(&Subst<'a>),
    ) {
        let Some(atom) = body.get(index) else {
            emit(subst);
            return;
        };
        let k = key(atom);
        let src = source(index);
        let table = match src {
            Source::Delta => self.delta.get(&k),
            Source::Full | Source::Old => self.full.get(&k),
        };
        let Some(table) = table else { return };
        let delta = self.delta.get(&k);
        // tuples are sorted, so a bound leading prefix narrows the scan to a range
        let prefix: Tuple = atom
            .args
            .iter()
            .map_while(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(v) => lookup(subst, v).cloned(),
            })
            .collect();
        let candidates = table
            .range::<Tuple, _>((Bound::Included(&prefix), Bound::Unbounded))
            .take_while(|t| t.starts_with(&prefix));
        for tuple in candidates {
            if src == Source::Old && delta.is_some_and(|d| d.contains(tuple)) {
                continue;
            }
            let mark = subst.len();
            if unify(atom, tuple, subst) {
                self.solve(body, index + 1, source, subst, emit);
                subst.truncate(mark);
            }
        }
    }
}

/// Semi-naive least fixpoint of `rules` over `facts`.
fn saturate(facts: Relations, rules: &[&Clause]) -> Relations {
    let mut full = facts.clone();
    let mut delta = facts;
    while !delta.is_empty() {
        let mut fresh: Relations = BTreeMap::new();
        {
            let join = Join {
                full: &full,
                delta: &delta,
            };
            for rule in rules {
                for pivot in 0..rule.body.len() {
                    if !delta.contains_key(&key(&rule.body[pivot])) {
                        continue;
                    }
                    let source = |i: usize| match i.cmp(&pivot) {
                        std::cmp::Ordering::Less => Source::Old,
                        std::cmp::Ordering::Equal => Source::Delta,
                        std::cmp::Ordering::Greater => Source::Full,
                    };
                    let head_key = key(&rule.head);
                    join.solve(&rule.body, 0, &source, &mut Vec::new(), &mut |subst| {
                        let tuple = instantiate(&rule.head, subst);
                        if !full.get(&head_key).is_some_and(|t| t.contains(&tuple)) {
                            fresh.entry(head_key.clone()).or_default().insert(tuple);
                        }
                    });
                }
            }
        }
        for (k, tuples) in &fresh {
            full.entry(k.clone())
                .or_default()
                .extend(tuples.iter().cloned());
        }
        delta = fresh;
    }
    full
}

/// A ground program over interned atom ids.
struct Propositional {
    rules: Vec<(usize, Vec<usize>)>,
    /// Rules each atom occurs in (as a body atom).
    occurs: Vec<Vec<usize>>,
}

impl Propositional {
    fn new(atom_count: usize, rules: Vec<(usize, Vec<usize>)>) -> Self {
        let mut occurs = vec![Vec::new(); atom_count];
        for (r, (_, body)) in rules.iter().enumerate() {
            for &a in body {
                occurs[a].push(r);
            }
        }
        Self { rules, occurs }
    }

    /// Forward chaining from `seeds`, updating `truth` and the per-rule
    /// outstanding body counts in place.
    fn propagate(
        &self,
        truth: &mut [bool],
        pending: &mut [usize],
        seeds: impl IntoIterator<Item = usize>,
    ) {
        let mut queue: Vec<usize> = Vec::new();
        for seed in seeds {
            if !truth[seed] {
                truth[seed] = true;
                queue.push(seed);
            }
        }
        while let Some(atom) = queue.pop() {
            for &r in &self.occurs[atom] {
                pending[r] -= 1;
                if pending[r] == 0 {
                    let head = self.rules[r].0;
                    if !truth[head] {
                        truth[head] = true;
                        queue.push(head);
                    }
                }
            }
        }
    }
}

pub fn evaluate(query: &Atom, kb: &[Clause]) -> Result<Vec<QueryResult>, LogicError> {
    evaluate_with_limit(query, kb, DEFAULT_PROBABILISTIC_LIMIT)
}

pub fn evaluate_with_limit(
    query: &Atom,
    kb: &[Clause],
    limit: usize,
) -> Result<Vec<QueryResult>, LogicError> {
    let probabilistic: Vec<&Clause> = kb.iter().filter(|c| c.is_probabilistic()).collect();
    if probabilistic.len() > limit {
        return Err(LogicError::TooManyProbabilisticFacts {
            count: probabilistic.len(),
            limit,
        });
    }
    let rules: Vec<&Clause> = kb.iter().filter(|c| !c.is_fact()).collect();

    let mut facts: Relations = BTreeMap::new();
    for clause in kb.iter().filter(|c| c.is_fact()) {
        facts
            .entry(key(&clause.head))
            .or_default()
            .insert(ground_tuple(&clause.head));
    }
    let model = saturate(facts, &rules);

    // Intern every atom of the bounding model.
    let mut ids: HashMap<(RelKey, Tuple), usize> = HashMap::new();
    for (k, tuples) in &model {
        for tuple in tuples {
            let next = ids.len();
            ids.insert((k.clone(), tuple.clone()), next);
        }
    }
    let id_of = |k: &RelKey, t: &Tuple| ids[&(k.clone(), t.clone())];

    // Ground rule instances supported by the model.
    let mut ground: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
    let empty = BTreeMap::new();
    let join = Join {
        full: &model,
        delta: &empty,
    };
    for rule in &rules {
        join.solve(
            &rule.body,
            0,
            &|_| Source::Full,
            &mut Vec::new(),
            &mut |subst| {
                let head = id_of(&key(&rule.head), &instantiate(&rule.head, subst));
                let mut body: Vec<usize> = rule
                    .body
                    .iter()
                    .map(|a| id_of(&key(a), &instantiate(a, subst)))
                    .collect();
                body.sort_unstable();
                body.dedup();
                ground.insert((head, body));
            },
        );
    }

    // Group matching atoms by the visible bindings they induce.
    let visible: Vec<&str> = query
        .variables()
        .into_iter()
        .filter(|v| !v.starts_with('_'))
        .collect();
    let mut groups: BTreeMap<Bindings, Vec<usize>> = BTreeMap::new();
    if let Some(tuples) = model.get(&key(query)) {
        for tuple in tuples {
            let mut subst = Vec::new();
            if unify(query, tuple, &mut subst) {
                let bindings: Bindings = visible
                    .iter()
                    .map(|v| {
                        (
                            v.to_string(),
                            lookup(&subst, v).cloned().expect("query variable bound"),
                        )
                    })
                    .collect();
                groups
                    .entry(bindings)
                    .or_default()
                    .push(id_of(&key(query), tuple));
            }
        }
    }
    if groups.is_empty() {
        return Ok(Vec::new());
    }

    let atom_count = ids.len();
    let deterministic_seeds: Vec<usize> = kb
        .iter()
        .filter(|c| c.is_fact() && !c.is_probabilistic())
        .map(|c| id_of(&key(&c.head), &ground_tuple(&c.head)))
        .collect();

    let program = Propositional::new(atom_count, ground.into_iter().collect());
    let mut base_truth = vec![false; atom_count];
    let mut base_pending: Vec<usize> = program.rules.iter().map(|(_, b)| b.len()).collect();
    for (r, (head, body)) in program.rules.iter().enumerate() {
        if body.is_empty() {
            // cannot happen for parsed rules, but keep the counters consistent
            base_pending[r] = 0;
            base_truth[*head] = true;
        }
    }
    program.propagate(&mut base_truth, &mut base_pending, deterministic_seeds);

    let mut results = Vec::with_capacity(groups.len());
    let mut uncertain: Vec<(Bindings, Vec<usize>)> = Vec::new();
    for (bindings, atoms) in groups {
        if atoms.iter().any(|&a| base_truth[a]) {
            results.push(QueryResult {
                bindings,
                probability: 1.0,
            });
        } else {
            uncertain.push((bindings, atoms));
        }
    }

    if !uncertain.is_empty() {
        // Backward closure from the uncertain answers.
        let mut by_head: Vec<Vec<usize>> = vec![Vec::new(); atom_count];
        for (r, (head, _)) in program.rules.iter().enumerate() {
            by_head[*head].push(r);
        }
        let mut relevant = vec![false; atom_count];
        let mut stack: Vec<usize> = uncertain
            .iter()
            .flat_map(|(_, atoms)| atoms.iter().copied())
            .collect();
        while let Some(atom) = stack.pop() {
            if std::mem::replace(&mut relevant[atom], true) {
                continue;
            }
            for &r in &by_head[atom] {
                stack.extend(program.rules[r].1.iter().copied().filter(|&a| !relevant[a]));
            }
        }
        let choices: Vec<(usize, f64)> = probabilistic
            .iter()
            .map(|c| (id_of(&key(&c.head), &ground_tuple(&c.head)), c.probability))
            .filter(|(id, _)| relevant[*id] && !base_truth[*id])
            .collect();

        let mut mass = vec![0.0; uncertain.len()];
        let worlds: u64 = 1 << choices.len();
        for world in 0..worlds {
            let mut weight = 1.0;
            for (bit, (_, p)) in choices.iter().enumerate() {
                weight *= if world >> bit & 1 == 1 { *p } else { 1.0 - *p };
            }
            if weight == 0.0 {
                continue;
            }
            let mut truth = base_truth.clone();
            let mut pending = base_pending.clone();
            let seeds = choices
                .iter()
                .enumerate()
                .filter(|(bit, _)| world >> bit & 1 == 1)
                .map(|(_, (id, _))| *id);
            program.propagate(&mut truth, &mut pending, seeds);
            for (slot, (_, atoms)) in mass.iter_mut().zip(&uncertain) {
                if atoms.iter().any(|&a| truth[a]) {
                    *slot += weight;
                }
            }
        }
        for ((bindings, _), probability) in uncertain.into_iter().zip(mass) {
            if probability > 0.0 {
                results.push(QueryResult {
                    bindings,
                    probability: probability.min(1.0),
                });
            }
        }
    }

    results.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.bindings.cmp(&b.bindings))
    });
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logicql::{parse_program, parse_query};

    fn run(kb: &str, query: &str) -> Vec<QueryResult> {
        evaluate(&parse_query(query).unwrap(), &parse_program(kb).unwrap()).unwrap()
    }

    fn sym(s: &str) -> Constant {
        Constant::Symbol(s.into())
    }

    #[test]
    fn single_fact() {
        let results = run("parent(alice,bob).", "parent(alice,X)?");
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].bindings["X"], sym("bob"));
        assert_eq!(results[0].probability, 1.0);
    }

    #[test]
    fn transitive_closure() {
        let kb = "parent(alice,bob). parent(bob,carol).
                  ancestor(X,Y) :- parent(X,Y).
                  ancestor(X,Y) :- parent(X,Z), ancestor(Z,Y).";
        let results = run(kb, "ancestor(alice,Y)?");
        let ys: Vec<_> = results.iter().map(|r| r.bindings["Y"].clone()).collect();
        assert_eq!(ys, [sym("bob"), sym("carol")]);
        assert!(results.iter().all(|r| r.probability == 1.0));
    }

    #[test]
    fn noisy_or() {
        // four equiprobable worlds over {p, q}; r holds in all but the empty one
        let results = run("0.5::p. 0.5::q. r :- p. r :- q.", "r?");
        assert_eq!(results.len(), 1);
        assert!(results[0].bindings.is_empty());
        assert!((results[0].probability - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_probabilistic_fact() {
        let results = run("0.6::likes(bob,apples).", "likes(bob,apples)?");
        assert!((results[0].probability - 0.6).abs() < 1e-12);
    }

    #[test]
    fn conjunction_and_sorting() {
        let kb = "0.5::a. 0.4::b. c(x) :- a, b. c(y) :- a. c(z).";
        let results = run(kb, "c(W)?");
        let shown: Vec<_> = results.iter().map(|r| r.to_string()).collect();
        assert_eq!(shown, ["{W=z} p=1", "{W=y} p=0.5", "{W=x} p=0.2"]);
    }

    #[test]
    fn deterministic_fact_dominates_probabilistic_copy() {
        let results = run("0.3::rain. rain.", "rain?");
        assert_eq!(results[0].probability, 1.0);
    }

    #[test]
    fn duplicate_probabilistic_facts_are_independent() {
        let results = run("0.5::coin. 0.5::coin.", "coin?");
        assert!((results[0].probability - 0.75).abs() < 1e-12);
    }

    #[test]
    fn repeated_variables_and_anonymous() {
        let kb = "e(a,a). e(a,b). e(b,b). 0.5::e(c,d). 0.5::e(c,e).";
        let loops: Vec<_> = run(kb, "e(X,X)?")
            .into_iter()
            .map(|r| r.bindings["X"].clone())
            .collect();
        assert_eq!(loops, [sym("a"), sym("b")]);
        let sources = run(kb, "e(X,_)?");
        assert_eq!(sources.len(), 3);
        let c = sources
            .iter()
            .find(|r| r.bindings["X"] == sym("c"))
            .unwrap();
        assert!((c.probability - 0.75).abs() < 1e-12);
        assert_eq!(c.bindings.len(), 1);
    }

    #[test]
    fn no_answer() {
        assert!(run("parent(alice,bob).", "parent(bob,X)?").is_empty());
        assert!(run("", "r?").is_empty());
    }

    #[test]
    fn limit_enforced() {
        let kb: String = (0..21).map(|i| format!("0.5::f({i}).\n")).collect();
        let err =
            evaluate(&parse_query("f(X)?").unwrap(), &parse_program(&kb).unwrap()).unwrap_err();
        assert_eq!(
            err,
            LogicError::TooManyProbabilisticFacts {
                count: 21,
                limit: 20
            }
        );
        let ok = evaluate_with_limit(
            &parse_query("f(3)?").unwrap(),
            &parse_program(&kb).unwrap(),
            21,
        )
        .unwrap();
        assert!((ok[0].probability - 0.5).abs() < 1e-12);
    }

    #[test]
    fn recursion_through_probabilistic_edges() {
        // path(a,c) needs both edges or the direct one: 1 - (1 - 0.5*0.5)(1 - 0.1)
        let kb = "0.5::edge(a,b). 0.5::edge(b,c). 0.1::edge(a,c).
                  path(X,Y) :- edge(X,Y). path(X,Y) :- edge(X,Z), path(Z,Y).";
        let results = run(kb, "path(a,c)?");
        assert!((results[0].probability - (1.0 - 0.75 * 0.9)).abs() < 1e-12);
    }
}
