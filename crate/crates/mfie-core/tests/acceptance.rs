//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers. Oracles here are written
//! independently of the library code paths they check.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfie_core::matching::{matching_loss, CostMatrix, LabelTensor};
use mfie_core::metrics::{dee_f1, re_f1, see_f1, Argument, Event};
use mfie_core::pointer::{bce_loss, gold_grid, score_with_cache, PointerGrid, PointerParams, TypedSpan};
use mfie_core::schema::{disintegrate, recompose, EvidenceRule, Relation, SchemaSet, SchemaEntry, PIVOT_SLOT};
use mfie_core::tensor::{sigmoid, Matrix};
use mfie_core::train::{
    dee_loss_grads, fgm_perturb, see_loss_grads, train_dee, train_see, DeeCorpus, SeeCorpus,
    TrainConfig,
};
use mfie_core::synth::{dee_corpus, see_corpus, DeeSynthConfig, SeeSynthConfig};
use mfie_core::vote::{vote, PredictionSet};
use mfie_core::window::{merge, split, Segment};
use mfie_core::{hungarian, schema};

fn pass(name: &str, detail: String) {
    println!("acceptance {name}: PASS ({detail})");
}

// ---------------------------------------------------------------------------
// Schema round trip
// ---------------------------------------------------------------------------

fn random_schema(rng: &mut ChaCha8Rng, max_slots: usize) -> SchemaSet {
    let predicates = rng.random_range(2..=4);
    let entries = (0..predicates)
        .map(|p| {
            let extra = rng.random_range(0..max_slots);
            let mut slots = vec![(PIVOT_SLOT.to_string(), format!("type{p}_0"))];
            for k in 0..extra {
                slots.push((format!("slot{p}_{k}"), format!("type{p}_{}", k + 1)));
            }
            SchemaEntry {
                predicate: format!("pred{p}"),
                subject_type: format!("subj{p}"),
                slots,
            }
        })
        .collect();
    SchemaSet::new(entries).expect("generated schema is valid")
}

fn random_relation(rng: &mut ChaCha8Rng, schema: &SchemaSet, serial: usize) -> Relation {
    let entry = &schema.entries()[rng.random_range(0..schema.entries().len())];
    // fill the pivot plus a random subset of the declared secondary slots
    let mut slots = vec![(PIVOT_SLOT.to_string(), format!("v{serial}_0"))];
    for (k, (key, _)) in entry.slots.iter().enumerate().skip(1) {
        if rng.random_bool(0.8) {
            slots.push((key.clone(), format!("v{serial}_{k}")));
        }
    }
    Relation::new(format!("s{serial}"), entry.predicate.clone(), &slots, schema)
        .expect("generated relation is schema-valid")
}

#[test]
fn schema_round_trip_10k() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let mut checked = 0usize;
    while checked < 10_000 {
        let schema = random_schema(&mut rng, 5);
        for _ in 0..50 {
            let relation = random_relation(&mut rng, &schema, checked);
            let m = relation.slot_count();
            let triples = disintegrate(&relation, &schema).expect("disintegrate");
            assert_eq!(triples.len(), 2 * m - 1, "|disintegrate| must be 2m-1");
            let back =
                recompose(&triples, &schema, EvidenceRule::Either).expect("recompose");
            assert_eq!(back, vec![relation.clone()], "round trip failed at case {checked}");
            let strict = recompose(&triples, &schema, EvidenceRule::Both).expect("recompose");
            assert_eq!(strict, vec![relation], "strict round trip failed at case {checked}");
            checked += 1;
            if checked == 10_000 {
                break;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "round trip took {elapsed:?}");
    pass("schema-round-trip", format!("{checked} relations, {elapsed:?}"));
}

// ---------------------------------------------------------------------------
// Hungarian optimality
// ---------------------------------------------------------------------------

/// Lexicographic permutation walk; strict improvement keeps the first
/// (lexicographically smallest) optimal permutation.
fn brute_force_assignment(cost: &CostMatrix) -> (Vec<usize>, f64) {
    let n = cost.size();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let total = cost.total(&perm);
        if best.as_ref().is_none_or(|(_, b)| total < *b) {
            best = Some((perm.clone(), total));
        }
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).unwrap();
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    best.unwrap()
}

#[test]
fn hungarian_exact_against_brute_force() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0B);
    let mut instances = 0usize;
    for size in 2..=6 {
        for _ in 0..1000 {
            let cost = CostMatrix::from_fn(size, |_, _| rng.random_range(-10.0..10.0));
            let perm = hungarian(&cost).expect("square finite matrix");
            let (bf_perm, bf_total) = brute_force_assignment(&cost);
            assert_eq!(
                cost.total(&perm),
                bf_total,
                "total cost must equal brute force exactly (size {size})"
            );
            assert_eq!(perm, bf_perm, "tie-break must be lexicographic (size {size})");
            instances += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "hungarian suite took {elapsed:?}");
    pass("hungarian-optimality", format!("{instances} instances, {elapsed:?}"));
}

// ---------------------------------------------------------------------------
// Matching-loss permutation invariance
// ---------------------------------------------------------------------------

#[test]
fn matching_loss_gold_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCAFE);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let m = rng.random_range(1..=5);
        let l = rng.random_range(1..=4);
        let r = rng.random_range(1..=3);
        let mut pred = LabelTensor::zeros(m, l, r);
        for v in pred.data_mut() {
            *v = rng.random_range(0.01..0.99);
        }
        let mut gold = LabelTensor::zeros(m, l, r);
        for v in gold.data_mut() {
            *v = if rng.random_bool(0.25) { 1.0 } else { 0.0 };
        }
        let base = matching_loss(&pred, &gold).expect("matching").loss;

        // random permutation of the gold events
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut shuffled = LabelTensor::zeros(m, l, r);
        for i in 0..m {
            for j in 0..l {
                for s in 0..2 {
                    for t in 0..r {
                        shuffled.set(i, j, s, t, gold.get(perm[i], j, s, t));
                    }
                }
            }
        }
        let permuted = matching_loss(&pred, &shuffled).expect("matching").loss;
        let delta = (base - permuted).abs();
        worst = worst.max(delta);
        assert!(delta < 1e-12, "case {case}: delta {delta}");
    }
    pass("matching-permutation-invariance", format!("500 pairs, worst delta {worst:.3e}"));
}

// ---------------------------------------------------------------------------
// Gradient correctness
// ---------------------------------------------------------------------------

fn rel_err(analytic: f64, fd: f64) -> f64 {
    let denom = analytic.abs().max(fd.abs());
    if denom < 1e-6 {
        // both effectively zero at finite-difference resolution
        return if (analytic - fd).abs() < 1e-8 { 0.0 } else { 1.0 };
    }
    (analytic - fd).abs() / denom
}

#[test]
fn gradient_pointer_bce_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1);
    let (l, r, d) = (7, 3, 5);
    let tokens = Matrix::from_fn(l, d, |_, _| rng.random_range(-1.0..1.0));
    let params = PointerParams {
        start_weights: Matrix::from_fn(r, d, |_, _| rng.random_range(-1.0..1.0)),
        start_bias: (0..r).map(|_| rng.random_range(-0.5..0.5)).collect(),
        end_weights: Matrix::from_fn(r, d, |_, _| rng.random_range(-1.0..1.0)),
        end_bias: (0..r).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };
    let gold = gold_grid(
        l,
        r,
        &[
            TypedSpan { type_index: 0, start: 1, end: 3, score: 1.0 },
            TypedSpan { type_index: 2, start: 4, end: 4, score: 1.0 },
        ],
    );
    let loss_of = |tok: &Matrix, par: &PointerParams| {
        let (grid, _) = score_with_cache(tok, par).unwrap();
        bce_loss(&grid, &gold).unwrap().0
    };
    let (grid, _) = score_with_cache(&tokens, &params).unwrap();
    let (_, bce) = bce_loss(&grid, &gold).unwrap();
    let grads =
        mfie_core::pointer::score_backward(&tokens, &params, &bce.d_start_logits, &bce.d_end_logits);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, fd: f64, what: &str| {
        let e = rel_err(analytic, fd);
        worst = worst.max(e);
        assert!(e < 1e-4, "{what}: analytic {analytic} vs fd {fd}");
    };
    for j in 0..l {
        for c in 0..d {
            let mut tp = tokens.clone();
            tp.set(j, c, tp.get(j, c) + h);
            let mut tm = tokens.clone();
            tm.set(j, c, tm.get(j, c) - h);
            let fd = (loss_of(&tp, &params) - loss_of(&tm, &params)) / (2.0 * h);
            check(grads.tokens.get(j, c), fd, "token");
        }
    }
    for i in 0..r {
        for c in 0..d {
            for which in 0..2 {
                let mut pp = params.clone();
                let mut pm = params.clone();
                let (a, b) = if which == 0 {
                    (&mut pp.start_weights, &mut pm.start_weights)
                } else {
                    (&mut pp.end_weights, &mut pm.end_weights)
                };
                a.set(i, c, a.get(i, c) + h);
                b.set(i, c, b.get(i, c) - h);
                let fd = (loss_of(&tokens, &pp) - loss_of(&tokens, &pm)) / (2.0 * h);
                let analytic = if which == 0 {
                    grads.params.start_weights.get(i, c)
                } else {
                    grads.params.end_weights.get(i, c)
                };
                check(analytic, fd, "weight");
            }
        }
        let mut pp = params.clone();
        pp.start_bias[i] += h;
        let mut pm = params.clone();
        pm.start_bias[i] -= h;
        let fd = (loss_of(&tokens, &pp) - loss_of(&tokens, &pm)) / (2.0 * h);
        check(grads.params.start_bias[i], fd, "bias");
    }
    pass("gradient-pointer-bce", format!("worst rel err {worst:.3e}"));
}

/// Builds a small sentence-level corpus and returns (corpus, config).
fn tiny_see_setup() -> (SeeCorpus, TrainConfig) {
    let records = see_corpus(&SeeSynthConfig {
        sentences: 4,
        event_types: 2,
        ambiguous_fraction: 0.5,
        seed: 3,
    });
    let corpus = SeeCorpus::from_records(&records).unwrap();
    let config = TrainConfig { dim: 6, seed: 5, ..TrainConfig::default() };
    (corpus, config)
}

#[test]
fn gradient_fused_trigger_path_matches_finite_differences() {
    let (corpus, config) = tiny_see_setup();
    let model = mfie_core::train::SeeModel::init(
        &corpus.vocab,
        corpus.arg_types.clone(),
        corpus.trigger_types.clone(),
        &config,
    );
    let example = corpus
        .examples
        .iter()
        .find(|e| !e.trigger_spans.is_empty() && e.tokens.len() <= 10)
        .expect("an example with a trigger");

    let embedded = model.encoder.gather(&example.token_ids);
    let (_, d_embedded, _) = see_loss_grads(&model, example, &embedded, &config, true).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..embedded.rows() {
        for c in 0..embedded.cols() {
            let mut ep = embedded.clone();
            ep.set(j, c, ep.get(j, c) + h);
            let mut em = embedded.clone();
            em.set(j, c, em.get(j, c) - h);
            let lp = see_loss_grads(&model, example, &ep, &config, true).unwrap().0;
            let lm = see_loss_grads(&model, example, &em, &config, true).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let e = rel_err(d_embedded.get(j, c), fd);
            worst = worst.max(e);
            assert!(e < 1e-4, "embedding ({j},{c}): analytic {} vs fd {fd}", d_embedded.get(j, c));
        }
    }
    pass("gradient-fused-trigger-path", format!("worst rel err {worst:.3e}"));
}

#[test]
fn gradient_decoder_matching_matches_finite_differences() {
    let records = dee_corpus(&DeeSynthConfig {
        documents: 2,
        max_events: 1,
        event_types: 2,
        seed: 9,
    });
    let config = TrainConfig {
        dim: 4,
        query_count: 3,
        decoder_layers: 1,
        heads: 2,
        window: 64,
        stride: 32,
        seed: 5,
        ..TrainConfig::default()
    };
    let corpus = DeeCorpus::from_records(&records, &config).unwrap();
    let model = mfie_core::train::DeeModel::init(
        &corpus.vocab,
        corpus.arg_types.clone(),
        corpus.event_types.clone(),
        &config,
    )
    .unwrap();
    let segment = corpus
        .documents
        .iter()
        .flat_map(|d| &d.segments)
        .find(|s| !s.tokens.is_empty() && s.tokens.len() <= 10)
        .expect("a segment within the ten-token budget");

    let embedded = model.encoder.gather(&segment.token_ids);
    let (_, d_embedded, _) = dee_loss_grads(&model, segment, &embedded).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..embedded.rows() {
        for c in 0..embedded.cols() {
            let mut ep = embedded.clone();
            ep.set(j, c, ep.get(j, c) + h);
            let mut em = embedded.clone();
            em.set(j, c, em.get(j, c) - h);
            let lp = dee_loss_grads(&model, segment, &ep).unwrap().0;
            let lm = dee_loss_grads(&model, segment, &em).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let e = rel_err(d_embedded.get(j, c), fd);
            worst = worst.max(e);
            assert!(e < 1e-4, "embedding ({j},{c}): analytic {} vs fd {fd}", d_embedded.get(j, c));
        }
    }
    pass("gradient-decoder-matching", format!("worst rel err {worst:.3e}"));
}

#[test]
fn gradient_fgm_composite_step_matches_finite_differences() {
    // With r_adv held fixed at its computed value, the accumulated gradient
    // of (clean + adversarial) loss must match finite differences.
    let (corpus, config) = tiny_see_setup();
    let model = mfie_core::train::SeeModel::init(
        &corpus.vocab,
        corpus.arg_types.clone(),
        corpus.trigger_types.clone(),
        &config,
    );
    let example = &corpus.examples[0];
    let embedded = model.encoder.gather(&example.token_ids);
    let (_, d_clean, _) = see_loss_grads(&model, example, &embedded, &config, true).unwrap();
    let r_adv = fgm_perturb(&d_clean, config.fgm_epsilon);
    let perturbed = embedded.add(&r_adv);
    let (_, d_adv, _) = see_loss_grads(&model, example, &perturbed, &config, true).unwrap();

    let composite = |e: &Matrix| {
        let clean = see_loss_grads(&model, example, e, &config, true).unwrap().0;
        let adv = see_loss_grads(&model, example, &e.add(&r_adv), &config, true).unwrap().0;
        clean + adv
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..embedded.rows() {
        for c in 0..embedded.cols() {
            let mut ep = embedded.clone();
            ep.set(j, c, ep.get(j, c) + h);
            let mut em = embedded.clone();
            em.set(j, c, em.get(j, c) - h);
            let fd = (composite(&ep) - composite(&em)) / (2.0 * h);
            let analytic = d_clean.get(j, c) + d_adv.get(j, c);
            let e = rel_err(analytic, fd);
            worst = worst.max(e);
            assert!(e < 1e-4, "embedding ({j},{c}): analytic {analytic} vs fd {fd}");
        }
    }
    pass("gradient-fgm-composite", format!("worst rel err {worst:.3e}"));
}

// ---------------------------------------------------------------------------
// FGM norm
// ---------------------------------------------------------------------------

#[test]
fn fgm_perturbation_norm_is_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF6);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let rows = rng.random_range(1..8);
        let cols = rng.random_range(1..16);
        let grad = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-5.0..5.0));
        if grad.frobenius_norm() == 0.0 {
            continue;
        }
        let epsilon = rng.random_range(0.01..3.0);
        let r_adv = fgm_perturb(&grad, epsilon);
        let delta = (r_adv.frobenius_norm() - epsilon).abs();
        worst = worst.max(delta);
        assert!(delta <= 1e-12, "case {case}: |norm - eps| = {delta}");
    }
    pass("fgm-norm", format!("1000 gradients, worst |norm-eps| {worst:.3e}"));
}

// ---------------------------------------------------------------------------
// Overfit capability
// ---------------------------------------------------------------------------

#[test]
fn see_overfit_and_trigger_direction() {
    let start = Instant::now();
    let records = see_corpus(&SeeSynthConfig::default());
    let corpus = SeeCorpus::from_records(&records).unwrap();
    assert_eq!(corpus.examples.len(), 50);

    // capability: the default (trigger-enabled) configuration must reach
    // 0.95 argument token-F1 within 200 epochs
    let config = TrainConfig { epochs: 200, seed: 2, ..TrainConfig::default() };
    let outcome = train_see(&corpus, &config).unwrap();
    let best = outcome.history.iter().map(|h| h.f1).fold(0.0, f64::max);
    assert!(best >= 0.95, "trigger-enabled run reached only {best}");

    // direction: trigger-enabled final F1 beats trigger-disabled on >= 7/10 seeds
    let mut wins = 0;
    for seed in 1..=10 {
        let enabled_cfg = TrainConfig { epochs: 200, seed, ..TrainConfig::default() };
        let disabled_cfg = TrainConfig { trigger_loss_weight: 0.0, ..enabled_cfg.clone() };
        let enabled = train_see(&corpus, &enabled_cfg).unwrap().history.last().unwrap().f1;
        let disabled = train_see(&corpus, &disabled_cfg).unwrap().history.last().unwrap().f1;
        if enabled >= disabled {
            wins += 1;
        }
    }
    assert!(wins >= 7, "trigger task helped on only {wins}/10 seeds");
    pass(
        "see-overfit",
        format!("best F1 {best:.4}, trigger direction {wins}/10 seeds, {:?}", start.elapsed()),
    );
}

#[test]
fn dee_overfit_capability() {
    let start = Instant::now();
    let records = dee_corpus(&DeeSynthConfig::default());
    let config = TrainConfig {
        epochs: 300,
        learning_rate: 2.5,
        seed: 3,
        ..TrainConfig::default()
    };
    assert_eq!(config.query_count, 16);
    let corpus = DeeCorpus::from_records(&records, &config).unwrap();
    assert!(corpus.documents.iter().all(|d| d.gold_events.len() <= 3));
    let outcome = train_dee(&corpus, &config).unwrap();
    let best = outcome.history.iter().map(|h| h.f1).fold(0.0, f64::max);
    assert!(best >= 0.9, "event-level F1 reached only {best}");
    pass("dee-overfit", format!("best F1 {best:.4}, {:?}", start.elapsed()));
}

// ---------------------------------------------------------------------------
// Sliding-window round trip
// ---------------------------------------------------------------------------

#[test]
fn window_round_trip_survives_split_merge() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut docs = 0usize;
    while docs < 1000 {
        let len = rng.random_range(1..1500);
        let text: String = "x".repeat(len);
        // non-overlapping same-type gold spans
        let mut spans: Vec<TypedSpan> = Vec::new();
        let mut cursor = 0usize;
        while cursor + 1 < len && spans.len() < 12 {
            let start = cursor + rng.random_range(0..30.min(len - cursor));
            if start >= len {
                break;
            }
            let end = (start + rng.random_range(0..40)).min(len - 1);
            spans.push(TypedSpan {
                type_index: rng.random_range(0..3),
                start,
                end,
                score: 1.0,
            });
            cursor = end + 2;
        }
        for (window, stride) in [(128, 64), (256, 128), (512, 256)] {
            let segments = split("doc", &text, window, stride).unwrap();
            // predict-identity: every window reports the gold spans it fully contains
            let per_segment: Vec<(Segment, Vec<TypedSpan>)> = segments
                .into_iter()
                .map(|seg| {
                    let seg_start = seg.start_offset;
                    let seg_end = seg_start + seg.char_len();
                    let local: Vec<TypedSpan> = spans
                        .iter()
                        .filter(|s| s.start >= seg_start && s.end < seg_end)
                        .map(|s| TypedSpan {
                            type_index: s.type_index,
                            start: s.start - seg_start,
                            end: s.end - seg_start,
                            score: s.score,
                        })
                        .collect();
                    (seg, local)
                })
                .collect();
            let merged = merge(&per_segment).unwrap();
            let mut expected: Vec<&TypedSpan> = spans
                .iter()
                .filter(|s| {
                    per_segment.iter().any(|(seg, _)| {
                        s.start >= seg.start_offset
                            && s.end < seg.start_offset + seg.char_len()
                    })
                })
                .collect();
            expected.sort_by_key(|s| (s.start, s.end, s.type_index));
            assert_eq!(
                merged.len(),
                expected.len(),
                "doc {docs} window {window}: {merged:?} vs {expected:?}"
            );
            for (got, want) in merged.iter().zip(&expected) {
                assert_eq!(
                    (got.type_index, got.start, got.end),
                    (want.type_index, want.start, want.end)
                );
            }
        }
        docs += 1;
    }
    pass("window-round-trip", format!("{docs} documents x 3 configurations"));
}

// ---------------------------------------------------------------------------
// Metrics oracle equivalence
// ---------------------------------------------------------------------------

/// Maximum total score over all one-to-one pairings, by recursion over the
/// smaller side (exact for groups <= 5).
fn brute_force_pairing_max(scores: &[Vec<f64>]) -> f64 {
    fn go(scores: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
        if row == scores.len() {
            return 0.0;
        }
        // allow leaving this row unmatched
        let mut best = go(scores, row + 1, used);
        for col in 0..used.len() {
            if !used[col] {
                used[col] = true;
                best = best.max(scores[row][col] + go(scores, row + 1, used));
                used[col] = false;
            }
        }
        best
    }
    if scores.is_empty() || scores[0].is_empty() {
        return 0.0;
    }
    go(scores, 0, &mut vec![false; scores[0].len()])
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let letters = ["a", "b", "ab", "abc", "bc", "abcd", "x", "xy"];
    letters[rng.random_range(0..letters.len())].to_string()
}

#[test]
fn metrics_assignments_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0DDC0DE);

    // see_f1: per-(type, role) pairing equals brute-force max total score
    for case in 0..1000 {
        let pred_n = rng.random_range(0..=5);
        let gold_n = rng.random_range(0..=5);
        let pred_events = vec![Event {
            event_type: "t".into(),
            arguments: (0..pred_n).map(|_| Argument::new("r", random_word(&mut rng))).collect(),
            trigger: None,
        }];
        let gold_events = vec![Event {
            event_type: "t".into(),
            arguments: (0..gold_n)
                .map(|_| Argument {
                    role: "r".into(),
                    mentions: (0..rng.random_range(1..=2)).map(|_| random_word(&mut rng)).collect(),
                })
                .collect(),
            trigger: None,
        }];
        let score = see_f1(&pred_events, &gold_events);
        let matrix: Vec<Vec<f64>> = pred_events[0]
            .arguments
            .iter()
            .map(|p| {
                gold_events[0]
                    .arguments
                    .iter()
                    .map(|g| {
                        g.mentions
                            .iter()
                            .map(|m| mfie_core::metrics::char_f1(p.text(), m))
                            .fold(0.0, f64::max)
                    })
                    .collect()
            })
            .collect();
        let best = brute_force_pairing_max(&matrix);
        let total_from_score = score.precision * pred_n as f64;
        assert!(
            (total_from_score - best).abs() < 1e-9,
            "case {case}: assignment total {total_from_score} vs brute force {best}"
        );
    }

    // dee_f1: event-to-event assignment equals brute-force max matched args
    for case in 0..1000 {
        let pred_n = rng.random_range(0..=4);
        let gold_n = rng.random_range(0..=4);
        let mk_event = |rng: &mut ChaCha8Rng| Event {
            event_type: "t".into(),
            arguments: (0..rng.random_range(1..=3))
                .map(|_| {
                    let role = format!("r{}", rng.random_range(0..2));
                    Argument::new(role, random_word(rng))
                })
                .collect(),
            trigger: None,
        };
        let pred: Vec<Event> = (0..pred_n).map(|_| mk_event(&mut rng)).collect();
        let gold: Vec<Event> = (0..gold_n).map(|_| mk_event(&mut rng)).collect();
        let score = dee_f1(&pred, &gold);
        // dee_f1 collapses duplicate predictions; mirror that here
        let mut unique: Vec<&Event> = Vec::new();
        for e in &pred {
            if !unique.contains(&e) {
                unique.push(e);
            }
        }
        let matrix: Vec<Vec<f64>> = gold
            .iter()
            .map(|g| {
                unique
                    .iter()
                    .map(|p| mfie_core::metrics::matched_arguments(p, g) as f64)
                    .collect()
            })
            .collect();
        let best = brute_force_pairing_max(&matrix);
        let gold_args: usize = gold.iter().map(|e| e.arguments.len()).sum();
        let total_from_score = score.recall * gold_args as f64;
        assert!(
            (total_from_score - best).abs() < 1e-9,
            "case {case}: matched {total_from_score} vs brute force {best}"
        );
    }

    // the worked multi-slot example: partially correct prediction scores 0
    let schema = SchemaSet::new(vec![SchemaEntry {
        predicate: "play".into(),
        subject_type: "entertainer".into(),
        slots: vec![
            (PIVOT_SLOT.into(), "role".into()),
            ("inWork".into(), "film and television work".into()),
        ],
    }])
    .unwrap();
    let gold = vec![Relation::new(
        "E",
        "play",
        &[
            (PIVOT_SLOT.to_string(), "R".to_string()),
            ("inWork".to_string(), "W".to_string()),
        ],
        &schema,
    )
    .unwrap()];
    let pred = vec![Relation::new(
        "E",
        "play",
        &[
            (PIVOT_SLOT.to_string(), "R".to_string()),
            ("inWork".to_string(), "WRONG".to_string()),
        ],
        &schema,
    )
    .unwrap()];
    let score = re_f1(&pred, &gold);
    assert_eq!(score.f1, 0.0, "all-slots rule must zero the partial match");

    pass("metrics-oracle-equivalence", "2000 fuzz cases + worked example".to_string());
}

// ---------------------------------------------------------------------------
// Voting algebra
// ---------------------------------------------------------------------------

#[test]
fn voting_algebra_on_fuzzed_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x107E);
    for family in 0..500 {
        let k = rng.random_range(1..=6);
        let universe: Vec<String> = (0..rng.random_range(1..20)).map(|i| format!("rec{i}")).collect();
        let sets: Vec<PredictionSet> = (0..k)
            .map(|m| {
                let items: Vec<String> = universe
                    .iter()
                    .filter(|_| rng.random_bool(0.5))
                    .cloned()
                    .collect();
                PredictionSet::new(format!("m{m}"), items)
            })
            .collect();

        // union / intersection oracles
        let mut union: Vec<&String> = Vec::new();
        let mut intersection: Vec<&String> = Vec::new();
        for record in &universe {
            let count = sets.iter().filter(|s| s.items().contains(record)).count();
            if count >= 1 {
                union.push(record);
            }
            if count == k {
                intersection.push(record);
            }
        }
        let v1 = vote(&sets, 1).unwrap();
        assert_eq!(v1.len(), union.len(), "family {family}: union");
        let vk = vote(&sets, k).unwrap();
        assert_eq!(vk.len(), intersection.len(), "family {family}: intersection");

        // monotonicity: raising the threshold never adds records
        let mut previous = v1;
        for threshold in 2..=k {
            let current = vote(&sets, threshold).unwrap();
            assert!(
                current.is_subset(&previous),
                "family {family}: threshold {threshold} added records"
            );
            previous = current;
        }
    }
    pass("voting-algebra", "500 families".to_string());
}

// ---------------------------------------------------------------------------
// Additional spec examples frozen as regression checks
// ---------------------------------------------------------------------------

#[test]
fn paper_enumeration_example() {
    let schema = SchemaSet::new(vec![SchemaEntry {
        predicate: "play".into(),
        subject_type: "entertainer".into(),
        slots: vec![
            (PIVOT_SLOT.into(), "role".into()),
            ("inWork".into(), "film and television work".into()),
        ],
    }])
    .unwrap();
    let relation = Relation::new(
        "E",
        "play",
        &[
            (PIVOT_SLOT.to_string(), "R".to_string()),
            ("inWork".to_string(), "W".to_string()),
        ],
        &schema,
    )
    .unwrap();
    let triples = schema::disintegrate(&relation, &schema).unwrap();
    let flat: Vec<(String, String, String)> = triples
        .iter()
        .map(|t| (t.subject.clone(), t.predicate.clone(), t.pivot_value().to_string()))
        .collect();
    assert_eq!(
        flat,
        vec![
            ("E".into(), "play".into(), "R".into()),
            ("E".into(), "play-inWork".into(), "W".into()),
            ("R".into(), "inWork".into(), "W".into()),
        ]
    );
    pass("paper-enumeration", "2m-1 triples in declared order".to_string());
}

#[test]
fn abstract_macro_average_example() {
    use mfie_core::metrics::{macro_average, ScoreReport, SubtaskScore};
    let sub = |f1: f64| SubtaskScore {
        precision: f1,
        recall: f1,
        f1,
        per_type: Default::default(),
    };
    let report = ScoreReport {
        re: Some(sub(0.79887)),
        see: Some(sub(0.85179)),
        dee: Some(sub(0.70828)),
        macro_f1: None,
    };
    let avg = macro_average(&report).unwrap();
    let oracle = (0.79887 + 0.85179 + 0.70828) / 3.0;
    assert!((avg - oracle).abs() < 1e-15);
    assert!((avg - 0.78631).abs() < 5e-6);
    pass("macro-average", format!("{avg:.6}"));
}

#[test]
fn sigmoid_and_grid_sanity() {
    // spot checks shared by both pointer users
    assert_eq!(sigmoid(0.0), 0.5);
    let grid = PointerGrid {
        starts: Matrix::from_fn(4, 2, |_, _| 0.4),
        ends: Matrix::from_fn(4, 2, |_, _| 0.4),
    };
    assert!(mfie_core::decode_spans(&grid, 0.5).is_empty());
    pass("grid-sanity", "threshold gate".to_string());
}
