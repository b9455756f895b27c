//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use larp_core::logicql::{Constant, QueryResult};
use larp_core::ltm::{MemoryKind, MemoryStore, NewRecord, Scored};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .join("scenario.toml")
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

// ---------------------------------------------------------------------------
// logicql: random programs over a tiny fixed signature, answered by grounding
// every rule over the whole domain and forward-chaining each possible world.

pub const CONSTS: [&str; 4] = ["a", "b", "c", "d"];
pub const VARS: [&str; 3] = ["X", "Y", "Z"];
/// (name, arity, offset of its first ground atom in the bitmask)
pub const PREDS: [(&str, usize, usize); 5] = [
    ("e", 2, 0),
    ("f", 2, 16),
    ("g", 1, 32),
    ("h", 2, 36),
    ("k", 0, 52),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GTerm {
    C(usize),
    V(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GAtom {
    pub pred: usize,
    pub args: Vec<GTerm>,
}

impl GAtom {
    pub fn text(&self) -> String {
        let (name, arity, _) = PREDS[self.pred];
        if arity == 0 {
            return name.to_string();
        }
        let args: Vec<&str> = self
            .args
            .iter()
            .map(|t| match *t {
                GTerm::C(c) => CONSTS[c],
                GTerm::V(v) => VARS[v],
            })
            .collect();
        format!("{name}({})", args.join(","))
    }

    fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.args.iter().filter_map(|t| match *t {
            GTerm::V(v) => Some(v),
            GTerm::C(_) => None,
        })
    }

    /// Bit of this atom under `assign` (variable index -> constant index).
    fn bit(&self, assign: &[usize]) -> usize {
        let offset = PREDS[self.pred].2;
        let mut index = 0;
        for (i, t) in self.args.iter().enumerate() {
            let c = match *t {
                GTerm::C(c) => c,
                GTerm::V(v) => assign[v],
            };
            index += c * 4usize.pow(i as u32);
        }
        offset + index
    }
}

#[derive(Debug, Clone)]
pub struct GenKb {
    pub facts: Vec<GAtom>,
    pub probabilistic: Vec<(GAtom, f64)>,
    pub rules: Vec<(GAtom, Vec<GAtom>)>,
    pub text: String,
}

fn random_pred(rng: &mut impl Rng) -> usize {
    rng.gen_range(0..PREDS.len())
}

fn random_ground(rng: &mut impl Rng) -> GAtom {
    let pred = random_pred(rng);
    GAtom {
        pred,
        args: (0..PREDS[pred].1)
            .map(|_| GTerm::C(rng.gen_range(0..4)))
            .collect(),
    }
}

/// A random range-restricted program with at most `max_clauses` clauses, of which
/// at most `max_prob` are probabilistic facts over distinct atoms.
pub fn random_kb(rng: &mut impl Rng, max_clauses: usize, max_prob: usize) -> GenKb {
    let total = rng.gen_range(1..=max_clauses);
    let n_prob = rng.gen_range(0..=max_prob.min(total));
    let n_rules = rng.gen_range(0..=(total - n_prob));
    let n_facts = total - n_prob - n_rules;

    let facts: Vec<GAtom> = (0..n_facts).map(|_| random_ground(rng)).collect();
    let mut probabilistic: Vec<(GAtom, f64)> = Vec::new();
    while probabilistic.len() < n_prob {
        let atom = random_ground(rng);
        if probabilistic.iter().all(|(a, _)| *a != atom) {
            probabilistic.push((atom, rng.gen_range(1..=99) as f64 / 100.0));
        }
    }
    let mut rules = Vec::new();
    for _ in 0..n_rules {
        let body: Vec<GAtom> = (0..rng.gen_range(1..=3))
            .map(|_| {
                let pred = random_pred(rng);
                let args = (0..PREDS[pred].1)
                    .map(|_| {
                        if rng.gen_bool(0.8) {
                            GTerm::V(rng.gen_range(0..3))
                        } else {
                            GTerm::C(rng.gen_range(0..4))
                        }
                    })
                    .collect();
                GAtom { pred, args }
            })
            .collect();
        let bound: Vec<usize> = body
            .iter()
            .flat_map(|a| a.vars())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pred = random_pred(rng);
        let args = (0..PREDS[pred].1)
            .map(|_| match bound.choose(rng) {
                Some(&v) if rng.gen_bool(0.85) => GTerm::V(v),
                _ => GTerm::C(rng.gen_range(0..4)),
            })
            .collect();
        rules.push((GAtom { pred, args }, body));
    }

    let mut lines: Vec<String> = facts.iter().map(|f| format!("{}.", f.text())).collect();
    lines.extend(
        probabilistic
            .iter()
            .map(|(a, p)| format!("{p}::{}.", a.text())),
    );
    lines.extend(rules.iter().map(|(h, b)| {
        let body: Vec<String> = b.iter().map(GAtom::text).collect();
        format!("{} :- {}.", h.text(), body.join(", "))
    }));
    lines.shuffle(rng);
    GenKb {
        facts,
        probabilistic,
        rules,
        text: lines.join("\n"),
    }
}

pub fn random_query(rng: &mut impl Rng) -> GAtom {
    let pred = random_pred(rng);
    let args = (0..PREDS[pred].1)
        .map(|_| {
            if rng.gen_bool(0.6) {
                GTerm::V(rng.gen_range(0..2))
            } else {
                GTerm::C(rng.gen_range(0..4))
            }
        })
        .collect();
    GAtom { pred, args }
}

pub type OracleBindings = BTreeMap<String, Constant>;

/// Probability of every binding of `query`, by enumerating all worlds.
pub fn oracle_answers(kb: &GenKb, query: &GAtom) -> BTreeMap<OracleBindings, f64> {
    let mut ground: HashSet<(usize, u64)> = HashSet::new();
    for (head, body) in &kb.rules {
        for code in 0..64usize {
            let assign = [code % 4, (code / 4) % 4, code / 16];
            let mask = body.iter().fold(0u64, |m, a| m | 1 << a.bit(&assign));
            ground.insert((head.bit(&assign), mask));
        }
    }
    let ground: Vec<(usize, u64)> = ground.into_iter().collect();
    let base = kb.facts.iter().fold(0u64, |m, a| m | 1 << a.bit(&[]));

    // Candidate ground atoms of the query predicate with the bindings they give.
    let arity = PREDS[query.pred].1;
    let mut candidates: Vec<(usize, OracleBindings)> = Vec::new();
    'tuple: for code in 0..4usize.pow(arity as u32) {
        let tuple: Vec<usize> = (0..arity)
            .map(|i| (code / 4usize.pow(i as u32)) % 4)
            .collect();
        let mut bindings = OracleBindings::new();
        for (t, &c) in query.args.iter().zip(&tuple) {
            match *t {
                GTerm::C(k) if k != c => continue 'tuple,
                GTerm::C(_) => {}
                GTerm::V(v) => {
                    let value = Constant::Symbol(CONSTS[c].to_string());
                    if let Some(prev) = bindings.insert(VARS[v].to_string(), value.clone()) {
                        if prev != value {
                            continue 'tuple;
                        }
                    }
                }
            }
        }
        let ground_atom = GAtom {
            pred: query.pred,
            args: tuple.iter().map(|&c| GTerm::C(c)).collect(),
        };
        candidates.push((ground_atom.bit(&[]), bindings));
    }

    let p = kb.probabilistic.len();
    let mut out: BTreeMap<OracleBindings, f64> = BTreeMap::new();
    for world in 0..(1u64 << p) {
        let mut weight = 1.0;
        let mut mask = base;
        for (i, (atom, prob)) in kb.probabilistic.iter().enumerate() {
            if world >> i & 1 == 1 {
                weight *= prob;
                mask |= 1 << atom.bit(&[]);
            } else {
                weight *= 1.0 - prob;
            }
        }
        loop {
            let before = mask;
            for &(head, body) in &ground {
                if mask & body == body {
                    mask |= 1 << head;
                }
            }
            if mask == before {
                break;
            }
        }
        let holding: BTreeSet<&OracleBindings> = candidates
            .iter()
            .filter(|(bit, _)| mask >> bit & 1 == 1)
            .map(|(_, b)| b)
            .collect();
        for b in holding {
            *out.entry(b.clone()).or_insert(0.0) += weight;
        }
    }
    out
}

/// Checks evaluator output against the oracle: same bindings, probabilities
/// within `tol`, and sorted by probability then bindings.
pub fn compare_answers(
    actual: &[QueryResult],
    expected: &BTreeMap<OracleBindings, f64>,
    tol: f64,
) -> Result<(), String> {
    let got: BTreeMap<&OracleBindings, f64> = actual
        .iter()
        .map(|r| (&r.bindings, r.probability))
        .collect();
    if got.len() != actual.len() {
        return Err("duplicate bindings in result".into());
    }
    let want: BTreeMap<&OracleBindings, f64> = expected.iter().map(|(b, p)| (b, *p)).collect();
    if !got.keys().eq(want.keys()) {
        return Err(format!(
            "bindings differ: got {:?}, want {:?}",
            got.keys().collect::<Vec<_>>(),
            want.keys().collect::<Vec<_>>()
        ));
    }
    for (b, p) in &want {
        if (got[b] - p).abs() > tol {
            return Err(format!("probability of {b:?}: got {}, want {p}", got[b]));
        }
    }
    for pair in actual.windows(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let ordered = x.probability > y.probability
            || (x.probability == y.probability && x.bindings < y.bindings);
        if !ordered {
            return Err(format!("result order: {x} before {y}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// retrieval: a from-scratch trigram embedder and brute-force rankers.

const VOCAB: [&str; 24] = [
    "well", "bucket", "water", "forge", "anvil", "smith", "miller", "square", "bread", "fire",
    "winter", "cold", "rope", "north", "mill", "river", "stone", "coin", "horse", "cart", "night",
    "market", "Well", "WATER",
];

pub fn oracle_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 256];
    if text.trim().is_empty() {
        return v;
    }
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let grams: Vec<String> = if chars.len() < 3 {
        vec![chars.iter().collect()]
    } else {
        chars.windows(3).map(|w| w.iter().collect()).collect()
    };
    for g in grams {
        let mut h: u64 = 14695981039346656037;
        for b in g.bytes() {
            h = (h ^ b as u64).wrapping_mul(1099511628211);
        }
        v[(h % 256) as usize] += 1.0;
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn random_sentence(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(2..=8);
    let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    let mut s = words.join(" ");
    if rng.gen_bool(0.3) {
        s.push('.');
    }
    s
}

pub fn random_keywords(rng: &mut impl Rng) -> Vec<String> {
    (0..rng.gen_range(0..=4))
        .map(|_| {
            if rng.gen_bool(0.15) {
                format!(
                    "{} {}",
                    VOCAB.choose(rng).unwrap(),
                    VOCAB.choose(rng).unwrap()
                )
            } else {
                VOCAB.choose(rng).unwrap().to_string()
            }
        })
        .collect()
}

/// `n` records split across characters `ann` and `bob`, mixing plain and QA
/// episodic memories and a few semantic facts, with repeated creation ticks.
pub fn random_store(rng: &mut impl Rng, n: usize) -> MemoryStore {
    let mut store = MemoryStore::new();
    for i in 0..n {
        let who = if rng.gen_bool(0.8) { "ann" } else { "bob" };
        let tick = (i / 3) as u64;
        let importance = rng.gen_range(0..=10) as f64 / 10.0;
        let new = match rng.gen_range(0..10) {
            0..=5 => NewRecord::episodic(who, random_sentence(rng), importance, tick),
            6..=8 => NewRecord::qa(
                who,
                random_sentence(rng),
                random_sentence(rng),
                importance,
                tick,
            ),
            _ => NewRecord::fact(
                who,
                format!("seen({}).", CONSTS[rng.gen_range(0..4)]),
                importance,
                tick,
            ),
        };
        store.store(new).expect("valid record");
    }
    store
}

/// (id, score, created_at) candidates sorted by score desc, created_at desc, id asc.
pub fn oracle_rank(mut hits: Vec<(u64, f64, u64)>, k: usize) -> Vec<(u64, f64, u64)> {
    hits.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(b.2.cmp(&a.2))
            .then(a.0.cmp(&b.0))
    });
    hits.truncate(k);
    hits
}

pub fn oracle_vector(
    store: &MemoryStore,
    query_text: &str,
    who: &str,
    kinds: &[MemoryKind],
    k: usize,
) -> Vec<(u64, f64, u64)> {
    let q = oracle_embed(query_text);
    if q.iter().all(|x| *x == 0.0) {
        return Vec::new();
    }
    let hits = store
        .records()
        .iter()
        .filter(|r| r.character_id == who && kinds.contains(&r.kind))
        .filter_map(|r| {
            let key = r.question.as_deref().unwrap_or(&r.content);
            let e = oracle_embed(key);
            (e.iter().any(|x| *x != 0.0)).then(|| (r.id, oracle_cosine(&q, &e), r.created_at))
        })
        .collect();
    oracle_rank(hits, k)
}

fn tokens(text: &str) -> String {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect();
    format!(" {} ", words.join(" "))
}

pub fn oracle_keyword(
    store: &MemoryStore,
    keywords: &[String],
    who: &str,
    k: usize,
) -> Vec<(u64, f64, u64)> {
    let distinct: BTreeSet<String> = keywords
        .iter()
        .map(|k| tokens(k))
        .filter(|t| !t.trim().is_empty())
        .collect();
    let hits = store
        .records()
        .iter()
        .filter(|r| r.character_id == who && r.kind == MemoryKind::EpisodicNl)
        .filter_map(|r| {
            let content = tokens(&r.content);
            let score = distinct
                .iter()
                .filter(|kw| content.contains(kw.as_str()))
                .count();
            (score > 0).then_some((r.id, score as f64, r.created_at))
        })
        .collect();
    oracle_rank(hits, k)
}

/// Same ids in the same order with scores within `tol`. Adjacent hits whose
/// scores differ by less than `tol` may appear in either order.
pub fn compare_ranking(
    actual: &[Scored],
    expected: &[(u64, f64, u64)],
    tol: f64,
) -> Result<(), String> {
    if actual.len() != expected.len() {
        return Err(format!(
            "length {} vs oracle {}",
            actual.len(),
            expected.len()
        ));
    }
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        if (a.score - e.1).abs() > tol {
            return Err(format!("rank {i}: score {} vs oracle {}", a.score, e.1));
        }
        if a.record.id != e.0 {
            let near_tie = expected
                .iter()
                .any(|o| o.0 == a.record.id && (o.1 - e.1).abs() <= tol && o.2 == e.2);
            if !near_tie {
                return Err(format!("rank {i}: id {} vs oracle {}", a.record.id, e.0));
            }
        }
    }
    Ok(())
}
