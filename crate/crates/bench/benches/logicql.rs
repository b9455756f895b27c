use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use larp_core::logicql::{parse_query, KnowledgeBase};

fn chain(n: usize) -> String {
    let mut text: String = (0..n)
        .map(|i| format!("parent(p{i}, p{}).\n", i + 1))
        .collect();
    text.push_str(
        "ancestor(X, Y) :- parent(X, Y).\nancestor(X, Y) :- parent(X, Z), ancestor(Z, Y).\n",
    );
    text
}

fn deterministic(c: &mut Criterion) {
    let mut group = c.benchmark_group("ancestor_chain");
    let query = parse_query("ancestor(p0, Y)?").unwrap();
    for n in [10, 50, 200] {
        let kb = KnowledgeBase::parse(&chain(n)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &kb, |b, kb| {
            b.iter(|| kb.query(black_box(&query)).unwrap())
        });
    }
    group.finish();
}

fn probabilistic(c: &mut Criterion) {
    let mut group = c.benchmark_group("uncertain_edges");
    let query = parse_query("ancestor(p0, Y)?").unwrap();
    for p in [4, 8, 12] {
        let mut text = chain(20);
        for i in 0..p {
            text.push_str(&format!("0.{}::parent(p{i}, q{i}).\n", 1 + i % 9));
        }
        let kb = KnowledgeBase::parse(&text).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(p), &kb, |b, kb| {
            b.iter(|| kb.query(black_box(&query)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, deterministic, probabilistic);
criterion_main!(benches);
