use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use levi_amr::corpus::parse_corpus;
use levi_amr::graph::random::random_graph;
use levi_amr::tensor::Tape;
use levi_amr::training::sentence_loss;
use levi_amr::{
    build_vocab, linearize, make_oracle, restore, smatch, LinearizeMode, Model, ParserConfig,
    Variant,
};

const TOY: &str = include_str!("../../../data/toy/train.amr");

fn graphs(n: usize) -> Vec<levi_amr::AmrGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..n).map(|_| random_graph(&mut rng, 12, 20)).collect()
}

fn bench_graphs(c: &mut Criterion) {
    let gs = graphs(64);
    for mode in [LinearizeMode::Concepts, LinearizeMode::Levi] {
        c.bench_function(&format!("linearize_restore/{mode:?}"), |b| {
            b.iter(|| {
                for g in &gs {
                    let s = linearize(black_box(g), mode).unwrap();
                    black_box(restore(&s, mode).unwrap());
                }
            })
        });
    }
    let other = graphs(128);
    c.bench_function("smatch/64_pairs", |b| {
        b.iter(|| {
            for (p, g) in gs.iter().zip(&other[64..]) {
                black_box(smatch(p, g, 4));
            }
        })
    });
}

fn bench_model(c: &mut Criterion) {
    let ex = parse_corpus(TOY, None).examples;
    for variant in Variant::ALL {
        let v = build_vocab(&ex, variant.mode());
        let m = Model::new(ParserConfig::toy(variant, 64, 4), v, 1).unwrap();
        let e = &ex[0];
        let o = make_oracle(e, &m.vocab).unwrap();
        c.bench_function(&format!("forward_backward/{variant}"), |b| {
            b.iter(|| {
                let mut t = Tape::new(&m.params);
                let l = sentence_loss(&m, &mut t, &e.sentence, &o, &Default::default()).unwrap();
                black_box(t.backward(l.total))
            })
        });
        c.bench_function(&format!("parse/{variant}"), |b| {
            b.iter(|| black_box(m.parse(&e.sentence).unwrap()))
        });
    }
}

criterion_group!(benches, bench_graphs, bench_model);
criterion_main!(benches);
