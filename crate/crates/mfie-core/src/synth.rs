//! Seeded synthetic corpora for exercising the trainers at desk scale.
//!
//! Sentence-level corpora mix three kinds of argument tokens: tokens bound
//! to one (event type, role) pair, shared context tokens that are never
//! arguments, and a small pool of ambiguous tokens whose role depends on the
//! event type of the sentence. Ambiguous tokens are the part a bag-of-tokens
//! model cannot separate; resolving them requires the trigger signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::records::{ArgumentRecord, EventItem, EventRecord};

/// Controls for [`see_corpus`].
#[derive(Debug, Clone)]
pub struct SeeSynthConfig {
    pub sentences: usize,
    pub event_types: usize,
    /// Fraction of sentences whose first argument is an ambiguous token.
    pub ambiguous_fraction: f64,
    pub seed: u64,
}

impl Default for SeeSynthConfig {
    fn default() -> Self {
        SeeSynthConfig { sentences: 50, event_types: 3, ambiguous_fraction: 0.2, seed: 11 }
    }
}

pub fn see_corpus(config: &SeeSynthConfig) -> Vec<EventRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let context: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
    let ambiguous: Vec<String> = (0..4).map(|i| format!("amb{i}")).collect();
    let mut records = Vec::with_capacity(config.sentences);
    for _ in 0..config.sentences {
        let etype = rng.random_range(0..config.event_types);
        let event_type = format!("etype{etype}");
        let trigger = format!("trig{etype}");

        let arg1 = if rng.random_bool(config.ambiguous_fraction) {
            ambiguous[rng.random_range(0..ambiguous.len())].clone()
        } else {
            format!("a{etype}r1x{}", rng.random_range(0..4))
        };
        // two-token arguments draw from positionally consistent pools: a
        // token identity is always a span start or always a span end, which
        // a context-free encoder can actually fit
        let arg2 = if rng.random_bool(0.5) {
            format!("a{etype}r2x{}", rng.random_range(0..4))
        } else {
            format!(
                "a{etype}r2s{} a{etype}r2e{}",
                rng.random_range(0..4),
                rng.random_range(0..4)
            )
        };

        let mut words: Vec<String> = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            words.push(context[rng.random_range(0..context.len())].clone());
        }
        words.push(trigger.clone());
        words.push(context[rng.random_range(0..context.len())].clone());
        words.push(arg1.clone());
        words.push(context[rng.random_range(0..context.len())].clone());
        words.push(arg2.clone());
        words.push(context[rng.random_range(0..context.len())].clone());

        records.push(EventRecord {
            id: None,
            title: None,
            text: words.join(" "),
            event_list: vec![EventItem {
                event_type,
                trigger: Some(trigger),
                arguments: vec![
                    ArgumentRecord { role: "r1".into(), argument: arg1, alias: vec![] },
                    ArgumentRecord { role: "r2".into(), argument: arg2, alias: vec![] },
                ],
            }],
        });
    }
    records
}

/// Controls for [`dee_corpus`].
#[derive(Debug, Clone)]
pub struct DeeSynthConfig {
    pub documents: usize,
    /// Events per document are drawn from 1..=max_events, distinct types.
    pub max_events: usize,
    pub event_types: usize,
    pub seed: u64,
}

impl Default for DeeSynthConfig {
    fn default() -> Self {
        DeeSynthConfig { documents: 12, max_events: 3, event_types: 3, seed: 13 }
    }
}

pub fn dee_corpus(config: &DeeSynthConfig) -> Vec<EventRecord> {
    assert!(config.max_events <= config.event_types, "documents use distinct event types");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let context: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
    let mut records = Vec::with_capacity(config.documents);
    for doc in 0..config.documents {
        let count = rng.random_range(1..=config.max_events);
        let mut types: Vec<usize> = (0..config.event_types).collect();
        // seeded partial shuffle picks distinct event types
        for i in 0..count {
            let j = rng.random_range(i..types.len());
            types.swap(i, j);
        }
        let mut sentences: Vec<String> = Vec::new();
        let mut event_list = Vec::with_capacity(count);
        for &etype in types.iter().take(count) {
            let v1 = format!("b{etype}r1x{}", rng.random_range(0..6));
            let v2 = format!("b{etype}r2x{}", rng.random_range(0..6));
            sentences.push(format!(
                "{} trig{etype} {} {v1} {} {v2}",
                context[rng.random_range(0..context.len())],
                context[rng.random_range(0..context.len())],
                context[rng.random_range(0..context.len())],
            ));
            event_list.push(EventItem {
                event_type: format!("etype{etype}"),
                trigger: Some(format!("trig{etype}")),
                arguments: vec![
                    ArgumentRecord { role: "r1".into(), argument: v1, alias: vec![] },
                    ArgumentRecord { role: "r2".into(), argument: v2, alias: vec![] },
                ],
            });
        }
        records.push(EventRecord {
            id: Some(format!("doc{doc}")),
            title: None,
            text: sentences.join(" . "),
            event_list,
        });
    }
    records
}
