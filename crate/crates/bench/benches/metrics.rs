use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use taxo_core::eval::{average_precision_at_k, wu_palmer, GoldSet};
use taxo_core::{Entity, Node, Taxonomy};

fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> Taxonomy {
    let mut src = String::new();
    for i in 0..n {
        if i == 0 || rng.gen_bool(0.1) {
            src.push_str(&format!("ROOT\tn{i}\n"));
        } else {
            src.push_str(&format!("n{}\tn{i}\n", rng.gen_range(0..i)));
        }
    }
    Taxonomy::parse(&src).unwrap()
}

fn bench_wu_palmer(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = random_tree(2000, &mut rng);
    let nodes: Vec<Node> = t.entities().iter().cloned().map(Node::Entity).collect();
    let pairs: Vec<(Node, Node)> = (0..1000)
        .map(|_| {
            (
                nodes[rng.gen_range(0..nodes.len())].clone(),
                nodes[rng.gen_range(0..nodes.len())].clone(),
            )
        })
        .collect();
    c.bench_function("wu_palmer_1000_pairs", |b| {
        b.iter(|| {
            for (p, g) in &pairs {
                black_box(wu_palmer(&t, p, g).unwrap());
            }
        })
    });
}

fn bench_ap(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ranked: Vec<Entity> = (0..400)
        .map(|i| Entity::new(format!("e{i}")).unwrap())
        .collect();
    let gold = GoldSet::new(ranked.iter().filter(|_| rng.gen_bool(0.5)).cloned());
    c.bench_function("ap_at_400", |b| {
        b.iter(|| black_box(average_precision_at_k(&ranked, &gold, 400).unwrap()))
    });
}

criterion_group!(benches, bench_wu_palmer, bench_ap);
criterion_main!(benches);
