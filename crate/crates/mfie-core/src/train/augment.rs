//! Data augmentation: synonym replacement and random deletion with entity
//! protection and span remapping.

use std::collections::HashMap;
use std::io::BufRead;

use rand::Rng;

use crate::error::{Error, Result};

/// Synonym groups loaded from a plain-text file: one group per line,
/// tab-separated tokens. A token's synonyms are the other members of every
/// group it appears in, in file order.
#[derive(Debug, Clone, Default)]
pub struct SynonymDict {
    synonyms: HashMap<String, Vec<String>>,
}

impl SynonymDict {
    pub fn from_groups(groups: &[Vec<String>]) -> SynonymDict {
        let mut synonyms: HashMap<String, Vec<String>> = HashMap::new();
        for group in groups {
            for token in group {
                let entry = synonyms.entry(token.clone()).or_default();
                for other in group {
                    if other != token && !entry.contains(other) {
                        entry.push(other.clone());
                    }
                }
            }
        }
        SynonymDict { synonyms }
    }

    pub fn read(reader: impl BufRead) -> Result<SynonymDict> {
        let mut groups = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let group: Vec<String> =
                line.split('\t').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect();
            if group.len() >= 2 {
                groups.push(group);
            }
        }
        Ok(SynonymDict::from_groups(&groups))
    }

    pub fn synonyms_of(&self, token: &str) -> &[String] {
        self.synonyms.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.synonyms.is_empty()
    }
}

/// Replaces each token, independently with probability `prob`, by a
/// uniformly chosen synonym. Tokens without synonyms are unchanged; length
/// is preserved.
pub fn synonyms_replace(
    tokens: &[String],
    dict: &SynonymDict,
    prob: f64,
    rng: &mut impl Rng,
) -> Vec<String> {
    synonyms_replace_masked(tokens, &vec![false; tokens.len()], dict, prob, rng)
}

/// [`synonyms_replace`] with a protection mask; `protected[i] == true` pins
/// token i (gold entity tokens must keep their surface strings).
pub fn synonyms_replace_masked(
    tokens: &[String],
    protected: &[bool],
    dict: &SynonymDict,
    prob: f64,
    rng: &mut impl Rng,
) -> Vec<String> {
    debug_assert!((0.0..=1.0).contains(&prob));
    debug_assert_eq!(tokens.len(), protected.len());
    tokens
        .iter()
        .zip(protected)
        .map(|(token, &pinned)| {
            if pinned || prob == 0.0 {
                return token.clone();
            }
            let candidates = dict.synonyms_of(token);
            if candidates.is_empty() || !rng.random_bool(prob) {
                token.clone()
            } else {
                candidates[rng.random_range(0..candidates.len())].clone()
            }
        })
        .collect()
}

/// Deletes non-entity tokens i.i.d. with probability `prob`. Every token
/// covered by an entity span is kept, and the returned spans are re-indexed
/// to the shortened sequence so they cover the identical surface strings.
///
/// Spans are inclusive token ranges and must be in bounds and
/// non-overlapping.
pub fn random_delete(
    tokens: &[String],
    entity_spans: &[(usize, usize)],
    prob: f64,
    rng: &mut impl Rng,
) -> Result<(Vec<String>, Vec<(usize, usize)>)> {
    debug_assert!((0.0..=1.0).contains(&prob));
    let mut protected = vec![false; tokens.len()];
    let mut sorted: Vec<(usize, usize)> = entity_spans.to_vec();
    sorted.sort();
    for window in sorted.windows(2) {
        if window[0].1 >= window[1].0 {
            return Err(Error::invalid(format!(
                "overlapping entity spans {:?} and {:?}",
                window[0], window[1]
            )));
        }
    }
    for &(start, end) in entity_spans {
        if start > end || end >= tokens.len() {
            return Err(Error::invalid(format!(
                "entity span ({start}, {end}) out of bounds for {} tokens",
                tokens.len()
            )));
        }
        for p in protected.iter_mut().take(end + 1).skip(start) {
            *p = true;
        }
    }

    let mut kept = Vec::with_capacity(tokens.len());
    let mut new_index = vec![usize::MAX; tokens.len()];
    for (i, token) in tokens.iter().enumerate() {
        let delete = !protected[i] && prob > 0.0 && rng.random_bool(prob);
        if !delete {
            new_index[i] = kept.len();
            kept.push(token.clone());
        }
    }
    let remapped = entity_spans
        .iter()
        .map(|&(start, end)| (new_index[start], new_index[end]))
        .collect();
    Ok((kept, remapped))
}
