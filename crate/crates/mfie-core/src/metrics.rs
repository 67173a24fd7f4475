//! Evaluation suite: exact multi-slot relation F1, token-level argument F1
//! with best-mention selection, event-level matching F1, and the macro
//! average over the three subtasks.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{hungarian, CostMatrix};
use crate::schema::Relation;

/// An event: type, role/argument pairs, optional trigger text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub event_type: String,
    pub arguments: Vec<Argument>,
    pub trigger: Option<String>,
}

/// One argument slot; gold arguments may carry several acceptable mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Argument {
    pub role: String,
    /// First entry is the primary mention; the rest are aliases.
    pub mentions: Vec<String>,
}

impl Argument {
    pub fn new(role: impl Into<String>, text: impl Into<String>) -> Self {
        Argument { role: role.into(), mentions: vec![text.into()] }
    }

    pub fn text(&self) -> &str {
        self.mentions.first().map(String::as_str).unwrap_or_default()
    }
}

/// Precision / recall / F1 triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(matched: f64, pred: f64, gold: f64) -> Prf {
        let precision = if pred > 0.0 {
            matched / pred
        } else if gold == 0.0 {
            1.0
        } else {
            0.0
        };
        let recall = if gold > 0.0 {
            matched / gold
        } else if pred == 0.0 {
            1.0
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

/// Score of one subtask with a per-type breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubtaskScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_type: BTreeMap<String, Prf>,
}

/// Combined report over the three subtasks.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re: Option<SubtaskScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub see: Option<SubtaskScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dee: Option<SubtaskScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
}

/// Arithmetic mean of the three subtask F1s; every subtask must be present.
pub fn macro_average(report: &ScoreReport) -> Result<f64> {
    let missing = |name| Error::invalid(format!("macro average: missing {name} subtask score"));
    let re = report.re.as_ref().ok_or_else(|| missing("re"))?;
    let see = report.see.as_ref().ok_or_else(|| missing("see"))?;
    let dee = report.dee.as_ref().ok_or_else(|| missing("dee"))?;
    Ok((re.f1 + see.f1 + dee.f1) / 3.0)
}

#[derive(Default, Clone, Copy)]
struct Tally {
    matched: f64,
    pred: f64,
    gold: f64,
}

impl Tally {
    fn add(&mut self, matched: f64, pred: f64, gold: f64) {
        self.matched += matched;
        self.pred += pred;
        self.gold += gold;
    }
}

fn finish(overall: Tally, per_type: BTreeMap<String, Tally>) -> SubtaskScore {
    let Prf { precision, recall, f1 } = Prf::from_counts(overall.matched, overall.pred, overall.gold);
    SubtaskScore {
        precision,
        recall,
        f1,
        per_type: per_type
            .into_iter()
            .map(|(k, t)| (k, Prf::from_counts(t.matched, t.pred, t.gold)))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Relation F1
// ---------------------------------------------------------------------------

fn relation_key(r: &Relation) -> (String, String, Vec<(String, String)>) {
    let mut slots: Vec<(String, String)> = r.slots().to_vec();
    slots.sort();
    (r.subject.clone(), r.predicate.clone(), slots)
}

fn re_tally(
    pred: &[Relation],
    gold: &[Relation],
    overall: &mut Tally,
    per_type: &mut BTreeMap<String, Tally>,
) {
    let mut unique_pred: Vec<&Relation> = Vec::new();
    for r in pred {
        if !unique_pred.iter().any(|u| relation_key(u) == relation_key(r)) {
            unique_pred.push(r);
        }
    }
    let mut remaining: HashMap<(String, String, Vec<(String, String)>), usize> = HashMap::new();
    for g in gold {
        *remaining.entry(relation_key(g)).or_insert(0) += 1;
    }
    for g in gold {
        per_type.entry(g.predicate.clone()).or_default().add(0.0, 0.0, 1.0);
        overall.gold += 1.0;
    }
    for p in unique_pred {
        let hit = match remaining.get_mut(&relation_key(p)) {
            Some(count) if *count > 0 => {
                *count -= 1;
                1.0
            }
            _ => 0.0,
        };
        overall.add(hit, 1.0, 0.0);
        per_type.entry(p.predicate.clone()).or_default().add(hit, 1.0, 0.0);
    }
}

/// Exact-match relation F1: a prediction is a true positive only when its
/// subject, predicate, and every slot key/value match an unconsumed gold
/// relation. Duplicate identical predictions are collapsed before scoring.
pub fn re_f1(pred: &[Relation], gold: &[Relation]) -> SubtaskScore {
    re_f1_corpus(std::iter::once((pred, gold)))
}

/// Exact-match relation F1 aggregated over records (micro average); each
/// record's predictions only consume that record's gold relations.
pub fn re_f1_corpus<'a>(
    records: impl IntoIterator<Item = (&'a [Relation], &'a [Relation])>,
) -> SubtaskScore {
    let mut overall = Tally::default();
    let mut per_type = BTreeMap::new();
    for (pred, gold) in records {
        re_tally(pred, gold, &mut overall, &mut per_type);
    }
    finish(overall, per_type)
}

// ---------------------------------------------------------------------------
// Sentence-level event F1 (token-level argument matching)
// ---------------------------------------------------------------------------

/// Character-level multiset F1 between two texts, ignoring whitespace.
pub fn char_f1(pred: &str, gold: &str) -> f64 {
    let count = |s: &str| {
        let mut map: HashMap<char, usize> = HashMap::new();
        for c in s.chars().filter(|c| !c.is_whitespace()) {
            *map.entry(c).or_insert(0) += 1;
        }
        map
    };
    let p = count(pred);
    let g = count(gold);
    let p_total: usize = p.values().sum();
    let g_total: usize = g.values().sum();
    if p_total == 0 || g_total == 0 {
        return if p_total == g_total { 1.0 } else { 0.0 };
    }
    let common: usize = p
        .iter()
        .map(|(c, n)| n.min(g.get(c).unwrap_or(&0)))
        .sum();
    2.0 * common as f64 / (p_total + g_total) as f64
}

/// Best-mention score of a predicted argument against a gold argument.
fn mention_score(pred: &Argument, gold: &Argument) -> f64 {
    gold.mentions
        .iter()
        .map(|m| char_f1(pred.text(), m))
        .fold(0.0, f64::max)
}

/// Maximum-total-score one-to-one pairing between two score-able sides,
/// solved exactly as an assignment problem on the padded square matrix.
fn optimal_pairing_total(pred_n: usize, gold_n: usize, score: impl Fn(usize, usize) -> f64) -> f64 {
    if pred_n == 0 || gold_n == 0 {
        return 0.0;
    }
    let n = pred_n.max(gold_n);
    let cost = CostMatrix::from_fn(n, |i, j| {
        if i < pred_n && j < gold_n {
            -score(i, j)
        } else {
            0.0
        }
    });
    let perm = hungarian(&cost).expect("square finite cost matrix");
    let mut total = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        if i < pred_n && j < gold_n {
            total += score(i, j);
        }
    }
    total
}

fn dedup_events(events: &[Event]) -> Vec<&Event> {
    let mut out: Vec<&Event> = Vec::new();
    for e in events {
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

fn see_tally(
    pred_events: &[Event],
    gold_events: &[Event],
    overall: &mut Tally,
    per_type: &mut BTreeMap<String, Tally>,
) {
    let pred_events = dedup_events(pred_events);
    // pool arguments by (event type, role) within the record
    let mut groups: BTreeMap<(&str, &str), (Vec<&Argument>, Vec<&Argument>)> = BTreeMap::new();
    for e in &pred_events {
        for a in &e.arguments {
            groups
                .entry((e.event_type.as_str(), a.role.as_str()))
                .or_default()
                .0
                .push(a);
        }
    }
    for e in gold_events {
        for a in &e.arguments {
            groups
                .entry((e.event_type.as_str(), a.role.as_str()))
                .or_default()
                .1
                .push(a);
        }
    }
    for ((event_type, _), (preds, golds)) in groups {
        let total = optimal_pairing_total(preds.len(), golds.len(), |i, j| {
            mention_score(preds[i], golds[j])
        });
        overall.add(total, preds.len() as f64, golds.len() as f64);
        per_type
            .entry(event_type.to_string())
            .or_default()
            .add(total, preds.len() as f64, golds.len() as f64);
    }
}

/// Token-level argument F1 for one record's event lists.
pub fn see_f1(pred: &[Event], gold: &[Event]) -> SubtaskScore {
    see_f1_corpus(std::iter::once((pred, gold)))
}

/// Token-level argument F1 aggregated over many records (micro average).
pub fn see_f1_corpus<'a>(
    records: impl IntoIterator<Item = (&'a [Event], &'a [Event])>,
) -> SubtaskScore {
    let mut overall = Tally::default();
    let mut per_type = BTreeMap::new();
    for (pred, gold) in records {
        see_tally(pred, gold, &mut overall, &mut per_type);
    }
    finish(overall, per_type)
}

// ---------------------------------------------------------------------------
// Document-level event F1 (event-level matching)
// ---------------------------------------------------------------------------

/// How gold events are assigned to predicted events within a type group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignmentStrategy {
    /// Exact maximum of total correct arguments.
    #[default]
    Optimal,
    /// Repeatedly take the pair with the most correct arguments.
    Greedy,
}

/// Number of exactly-correct arguments between a predicted and a gold event:
/// maximum matching where a predicted argument matches an unconsumed gold
/// argument with the same role and a mention equal to its text.
pub fn matched_arguments(pred: &Event, gold: &Event) -> usize {
    let compatible: Vec<Vec<usize>> = pred
        .arguments
        .iter()
        .map(|p| {
            gold.arguments
                .iter()
                .enumerate()
                .filter(|(_, g)| g.role == p.role && g.mentions.iter().any(|m| m == p.text()))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    // Kuhn's augmenting paths; sizes here are tiny
    let mut gold_owner = vec![usize::MAX; gold.arguments.len()];
    fn try_assign(
        i: usize,
        compatible: &[Vec<usize>],
        gold_owner: &mut [usize],
        visited: &mut [bool],
    ) -> bool {
        for &j in &compatible[i] {
            if visited[j] {
                continue;
            }
            visited[j] = true;
            if gold_owner[j] == usize::MAX
                || try_assign(gold_owner[j], compatible, gold_owner, visited)
            {
                gold_owner[j] = i;
                return true;
            }
        }
        false
    }
    let mut matched = 0;
    for i in 0..pred.arguments.len() {
        let mut visited = vec![false; gold.arguments.len()];
        if try_assign(i, &compatible, &mut gold_owner, &mut visited) {
            matched += 1;
        }
    }
    matched
}

fn group_matched_total(
    preds: &[&Event],
    golds: &[&Event],
    strategy: AssignmentStrategy,
) -> usize {
    if preds.is_empty() || golds.is_empty() {
        return 0;
    }
    let scores: Vec<Vec<usize>> = golds
        .iter()
        .map(|g| preds.iter().map(|p| matched_arguments(p, g)).collect())
        .collect();
    match strategy {
        AssignmentStrategy::Optimal => {
            let n = preds.len().max(golds.len());
            let cost = CostMatrix::from_fn(n, |i, j| {
                if i < golds.len() && j < preds.len() {
                    -(scores[i][j] as f64)
                } else {
                    0.0
                }
            });
            let perm = hungarian(&cost).expect("square finite cost matrix");
            perm.iter()
                .enumerate()
                .filter(|(i, &j)| *i < golds.len() && j < preds.len())
                .map(|(i, &j)| scores[i][j])
                .sum()
        }
        AssignmentStrategy::Greedy => {
            let mut used_pred = vec![false; preds.len()];
            let mut used_gold = vec![false; golds.len()];
            let mut total = 0;
            loop {
                let mut best: Option<(usize, usize, usize)> = None;
                for (i, row) in scores.iter().enumerate() {
                    if used_gold[i] {
                        continue;
                    }
                    for (j, &s) in row.iter().enumerate() {
                        if used_pred[j] {
                            continue;
                        }
                        if best.map_or(true, |(bs, _, _)| s > bs) {
                            best = Some((s, i, j));
                        }
                    }
                }
                match best {
                    Some((s, i, j)) => {
                        used_gold[i] = true;
                        used_pred[j] = true;
                        total += s;
                        if s == 0 {
                            break;
                        }
                    }
                    None => break,
                }
            }
            total
        }
    }
}

fn dee_tally(
    pred_events: &[Event],
    gold_events: &[Event],
    strategy: AssignmentStrategy,
    overall: &mut Tally,
    per_type: &mut BTreeMap<String, Tally>,
) {
    let pred_events = dedup_events(pred_events);
    let mut by_type: BTreeMap<&str, (Vec<&Event>, Vec<&Event>)> = BTreeMap::new();
    for e in &pred_events {
        by_type.entry(e.event_type.as_str()).or_default().0.push(e);
    }
    for e in gold_events {
        by_type.entry(e.event_type.as_str()).or_default().1.push(e);
    }
    for (event_type, (preds, golds)) in by_type {
        let matched = group_matched_total(&preds, &golds, strategy);
        if strategy == AssignmentStrategy::Optimal {
            let greedy = group_matched_total(&preds, &golds, AssignmentStrategy::Greedy);
            if greedy != matched {
                log::debug!(
                    "event matching: greedy ({greedy}) diverges from optimal ({matched}) for type {event_type:?}"
                );
            }
        }
        let pred_args: usize = preds.iter().map(|e| e.arguments.len()).sum();
        let gold_args: usize = golds.iter().map(|e| e.arguments.len()).sum();
        overall.add(matched as f64, pred_args as f64, gold_args as f64);
        per_type
            .entry(event_type.to_string())
            .or_default()
            .add(matched as f64, pred_args as f64, gold_args as f64);
    }
}

/// Event-level matching F1 for one document.
pub fn dee_f1(pred: &[Event], gold: &[Event]) -> SubtaskScore {
    dee_f1_corpus(std::iter::once((pred, gold)), AssignmentStrategy::Optimal)
}

/// Event-level matching F1 aggregated over documents (micro over arguments).
pub fn dee_f1_corpus<'a>(
    documents: impl IntoIterator<Item = (&'a [Event], &'a [Event])>,
    strategy: AssignmentStrategy,
) -> SubtaskScore {
    let mut overall = Tally::default();
    let mut per_type = BTreeMap::new();
    for (pred, gold) in documents {
        dee_tally(pred, gold, strategy, &mut overall, &mut per_type);
    }
    finish(overall, per_type)
}
