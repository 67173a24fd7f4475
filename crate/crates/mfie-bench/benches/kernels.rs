use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mfie_bench::{random_cost, random_matrix, random_pair, rng};
use mfie_core::decoder::{decode, DecoderStack, QueryBank};
use mfie_core::matching::{hungarian, matching_loss};
use mfie_core::pointer::{decode_spans, score, PointerParams};
use mfie_core::schema::{disintegrate, recompose, EvidenceRule, Relation, SchemaEntry, SchemaSet, PIVOT_SLOT};
use mfie_core::window::{merge, split};

fn bench_hungarian(c: &mut Criterion) {
    let mut group = c.benchmark_group("hungarian");
    let mut r = rng();
    for size in [4usize, 8, 16] {
        let cost = random_cost(size, &mut r);
        group.bench_with_input(BenchmarkId::from_parameter(size), &cost, |b, cost| {
            b.iter(|| hungarian(black_box(cost)).unwrap());
        });
    }
    group.finish();
}

fn bench_matching_loss(c: &mut Criterion) {
    let mut r = rng();
    let (pred, gold) = random_pair(16, 64, 8, &mut r);
    c.bench_function("matching_loss_m16_l64_r8", |b| {
        b.iter(|| matching_loss(black_box(&pred), black_box(&gold)).unwrap());
    });
}

fn bench_decoder(c: &mut Criterion) {
    let mut r = rng();
    let tokens = random_matrix(128, 32, &mut r);
    let queries = QueryBank::init(16, 32, &mut r);
    let stack = DecoderStack::init(3, 32, 4, &mut r).unwrap();
    c.bench_function("decode_m16_l128_d32_n3", |b| {
        b.iter(|| decode(black_box(&tokens), &queries, &stack).unwrap());
    });
}

fn bench_pointer(c: &mut Criterion) {
    let mut r = rng();
    let tokens = random_matrix(128, 32, &mut r);
    let params = PointerParams {
        start_weights: random_matrix(40, 32, &mut r),
        start_bias: vec![0.0; 40],
        end_weights: random_matrix(40, 32, &mut r),
        end_bias: vec![0.0; 40],
    };
    let grid = score(&tokens, &params).unwrap();
    c.bench_function("pointer_score_l128_r40", |b| {
        b.iter(|| score(black_box(&tokens), &params).unwrap());
    });
    c.bench_function("decode_spans_l128_r40", |b| {
        b.iter(|| decode_spans(black_box(&grid), 0.5));
    });
}

fn bench_schema(c: &mut Criterion) {
    let schema = SchemaSet::new(vec![SchemaEntry {
        predicate: "p".into(),
        subject_type: "s".into(),
        slots: vec![
            (PIVOT_SLOT.into(), "t0".into()),
            ("k1".into(), "t1".into()),
            ("k2".into(), "t2".into()),
            ("k3".into(), "t3".into()),
        ],
    }])
    .unwrap();
    let relations: Vec<Relation> = (0..64)
        .map(|i| {
            Relation::new(
                format!("s{i}"),
                "p",
                &[
                    (PIVOT_SLOT.to_string(), format!("v{i}")),
                    ("k1".to_string(), format!("a{i}")),
                    ("k2".to_string(), format!("b{i}")),
                    ("k3".to_string(), format!("c{i}")),
                ],
                &schema,
            )
            .unwrap()
        })
        .collect();
    let triples: Vec<Relation> = relations
        .iter()
        .flat_map(|r| disintegrate(r, &schema).unwrap())
        .collect();
    c.bench_function("disintegrate_64x4slots", |b| {
        b.iter(|| {
            for r in &relations {
                black_box(disintegrate(black_box(r), &schema).unwrap());
            }
        });
    });
    c.bench_function("recompose_64x4slots", |b| {
        b.iter(|| recompose(black_box(&triples), &schema, EvidenceRule::Either).unwrap());
    });
}

fn bench_window(c: &mut Criterion) {
    let text: String = "字".repeat(4096);
    c.bench_function("split_4096_w512_s256", |b| {
        b.iter(|| split("d", black_box(&text), 512, 256).unwrap());
    });
    let segments = split("d", &text, 512, 256).unwrap();
    let per_segment: Vec<_> = segments
        .into_iter()
        .map(|seg| {
            let spans = (0..8)
                .map(|k| mfie_core::TypedSpan {
                    type_index: k % 3,
                    start: k * 17,
                    end: k * 17 + 4,
                    score: 0.5 + k as f64 / 100.0,
                })
                .collect();
            (seg, spans)
        })
        .collect();
    c.bench_function("merge_15segs_8spans", |b| {
        b.iter(|| merge(black_box(&per_segment)).unwrap());
    });
}

criterion_group!(
    benches,
    bench_hungarian,
    bench_matching_loss,
    bench_decoder,
    bench_pointer,
    bench_schema,
    bench_window
);
criterion_main!(benches);
