mod common;

use common::*;
use larp_core::logicql::{
    parse_program, parse_query, pretty_print, Clause, KnowledgeBase, LogicError,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn agrees_with_world_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut answered, mut fractional) = (0, 0);
    for n in 0..100 {
        let kb = random_kb(&mut rng, 30, 12);
        let parsed = KnowledgeBase::parse(&kb.text).unwrap();
        for _ in 0..5 {
            let q = random_query(&mut rng);
            let got = parsed
                .query(&parse_query(&format!("{}?", q.text())).unwrap())
                .unwrap();
            let want = oracle_answers(&kb, &q);
            if let Err(e) = compare_answers(&got, &want, 1e-9) {
                panic!("kb {n}, query {}: {e}\n{}", q.text(), kb.text);
            }
            answered += usize::from(!got.is_empty());
            fractional += got.iter().filter(|r| r.probability < 1.0).count();
        }
    }
    // the generator must actually exercise derivations and uncertainty
    assert!(answered > 150, "only {answered} non-empty answers");
    assert!(fractional > 100, "only {fractional} uncertain bindings");
}

#[test]
fn deterministic_programs_are_certain() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let kb = random_kb(&mut rng, 30, 0);
        let parsed = KnowledgeBase::parse(&kb.text).unwrap();
        let q = random_query(&mut rng);
        for r in parsed
            .query(&parse_query(&format!("{}?", q.text())).unwrap())
            .unwrap()
        {
            assert_eq!(r.probability, 1.0);
        }
    }
}

#[test]
fn probabilistic_fact_limit() {
    let text: String = (0..21).map(|i| format!("0.5::p({i}).\n")).collect();
    let kb = KnowledgeBase::parse(&text).unwrap();
    let err = kb.query(&parse_query("p(X)?").unwrap()).unwrap_err();
    assert!(
        matches!(
            err,
            LogicError::TooManyProbabilisticFacts {
                count: 21,
                limit: 20
            }
        ),
        "{err:?}"
    );
    assert!(kb
        .with_probabilistic_limit(21)
        .query(&parse_query("p(3)?").unwrap())
        .is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_a_fact_keeps_every_binding(seed in any::<u64>(), extra in 0usize..53) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = random_kb(&mut rng, 20, 0);
        let q = random_query(&mut rng);
        let query = parse_query(&format!("{}?", q.text())).unwrap();
        let before = KnowledgeBase::parse(&kb.text).unwrap().query(&query).unwrap();
        let pred = PREDS.iter().rposition(|p| p.2 <= extra).unwrap();
        let index = extra - PREDS[pred].2;
        let args = (0..PREDS[pred].1).map(|i| GTerm::C((index / 4usize.pow(i as u32)) % 4)).collect();
        let fact = GAtom { pred, args };
        let grown = KnowledgeBase::parse(&format!("{}\n{}.", kb.text, fact.text())).unwrap();
        let after = grown.query(&query).unwrap();
        for r in &before {
            prop_assert!(after.iter().any(|a| a.bindings == r.bindings), "lost {} after adding {}", r, fact.text());
        }
    }

    #[test]
    fn pretty_print_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = random_kb(&mut rng, 30, 12);
        let clauses: Vec<Clause> = parse_program(&kb.text).unwrap();
        prop_assert_eq!(parse_program(&pretty_print(&clauses)).unwrap(), clauses);
    }
}
