//! Combines per-model prediction sets by vote count.
//!
//! Records are compared under a canonical serialization (NFC-normalized,
//! trimmed strings, sorted object keys), so text emitted by different models
//! hashes identically when it means the same thing.

use std::collections::BTreeSet;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// One model's deduplicated predictions, as canonical record strings.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub model_id: String,
    items: BTreeSet<String>,
}

impl PredictionSet {
    /// Builds a set from raw record strings. JSON records are canonicalized
    /// structurally; non-JSON lines are normalized as plain strings.
    pub fn new(model_id: impl Into<String>, records: impl IntoIterator<Item = String>) -> Self {
        let items = records.into_iter().map(|r| canonical_record(&r)).collect();
        PredictionSet { model_id: model_id.into(), items }
    }

    pub fn from_canonical(model_id: impl Into<String>, items: BTreeSet<String>) -> Self {
        PredictionSet { model_id: model_id.into(), items }
    }

    pub fn items(&self) -> &BTreeSet<String> {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Canonical form of a record string: parsed as JSON when possible (keys
/// sorted, strings NFC-normalized and trimmed), otherwise the normalized
/// trimmed string itself.
pub fn canonical_record(raw: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(raw) {
        Ok(value) => canonical_json(&value).to_string(),
        Err(_) => normalize_text(raw),
    }
}

fn normalize_text(s: &str) -> String {
    s.trim().nfc().collect()
}

/// Rebuilds a JSON value with sorted keys and normalized strings.
pub fn canonical_json(value: &serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::String(s) => Value::String(normalize_text(s)),
        Value::Array(items) => Value::Array(items.iter().map(canonical_json).collect()),
        Value::Object(map) => {
            let mut sorted: Vec<(String, serde_json::Value)> = map
                .iter()
                .map(|(k, v)| (normalize_text(k), canonical_json(v)))
                .collect();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(sorted.into_iter().collect())
        }
        other => other.clone(),
    }
}

/// Keeps the records appearing in at least `threshold` of the input sets.
/// Output is ordered lexicographically by canonical form.
pub fn vote(sets: &[PredictionSet], threshold: usize) -> Result<BTreeSet<String>> {
    if sets.is_empty() {
        return Err(Error::invalid("vote needs at least one prediction set"));
    }
    if threshold == 0 || threshold > sets.len() {
        return Err(Error::invalid(format!(
            "threshold {} out of range 1..={}",
            threshold,
            sets.len()
        )));
    }
    let weights = vec![1.0; sets.len()];
    weighted_vote(sets, &weights, threshold as f64)
}

/// Keeps records whose summed set weights reach `threshold`.
pub fn weighted_vote(
    sets: &[PredictionSet],
    weights: &[f64],
    threshold: f64,
) -> Result<BTreeSet<String>> {
    if sets.is_empty() {
        return Err(Error::invalid("vote needs at least one prediction set"));
    }
    if weights.len() != sets.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} sets",
            weights.len(),
            sets.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let mut tally: std::collections::BTreeMap<&str, f64> = std::collections::BTreeMap::new();
    for (set, w) in sets.iter().zip(weights) {
        for item in &set.items {
            *tally.entry(item.as_str()).or_insert(0.0) += w;
        }
    }
    Ok(tally
        .into_iter()
        .filter(|(_, total)| *total >= threshold)
        .map(|(record, _)| record.to_string())
        .collect())
}

/// Default vote threshold: strict majority of `k` sets.
pub fn majority_threshold(k: usize) -> usize {
    k / 2 + 1
}
