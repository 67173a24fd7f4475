//! Relation data model plus schema disintegration and reverse recomposition.
//!
//! A relation with m object slots is rewritten into 2m-1 single-slot triples
//! around the pivot slot value: the pivot forms `{s, p, v1}`, and every
//! further slot `(k_i, v_i)` forms `{s, p-k_i, v_i}` and `{v1, k_i, v_i}`.
//! Recomposition groups single-slot triples back into multi-slot relations,
//! using the two generated forms of each secondary slot as evidence.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// The slot key that anchors disintegration; always ordered first.
pub const PIVOT_SLOT: &str = "@value";

/// Joins a predicate and a slot key into a generated predicate.
pub const PREDICATE_SEPARATOR: char = '-';

/// An SPO record whose object is an ordered slot map. A single-O-value triple
/// is the one-slot case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub subject: String,
    pub subject_type: String,
    pub predicate: String,
    object_slots: Vec<(String, String)>,
    object_slot_types: Vec<(String, String)>,
}

impl Relation {
    /// Builds a relation validated and canonicalized against `schema`:
    /// slot order becomes pivot first, then schema declaration order, and all
    /// type strings are taken from the schema entry.
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        slots: &[(String, String)],
        schema: &SchemaSet,
    ) -> Result<Relation> {
        let subject = subject.into();
        let predicate = predicate.into();
        let entry = schema.entry(&predicate)?;
        if slots.is_empty() {
            return Err(Error::invalid(format!(
                "relation ({subject}, {predicate}) has no object slots"
            )));
        }
        let mut seen: Vec<&str> = Vec::new();
        for (key, _) in slots {
            if seen.contains(&key.as_str()) {
                return Err(Error::invalid(format!("duplicate slot key {key:?}")));
            }
            if !entry.slots.iter().any(|(k, _)| k == key) {
                return Err(Error::schema(format!(
                    "slot {key:?} is not declared for predicate {predicate:?}"
                )));
            }
            seen.push(key);
        }
        if !slots.iter().any(|(k, _)| k == PIVOT_SLOT) {
            return Err(Error::schema(format!(
                "relation ({subject}, {predicate}) is missing the {PIVOT_SLOT} slot"
            )));
        }
        // canonical order: schema order (pivot is first there by construction)
        let mut object_slots = Vec::with_capacity(slots.len());
        let mut object_slot_types = Vec::with_capacity(slots.len());
        for (key, ty) in &entry.slots {
            if let Some((_, v)) = slots.iter().find(|(k, _)| k == key) {
                object_slots.push((key.clone(), v.clone()));
                object_slot_types.push((key.clone(), ty.clone()));
            }
        }
        Ok(Relation {
            subject,
            subject_type: entry.subject_type.clone(),
            predicate,
            object_slots,
            object_slot_types,
        })
    }

    /// Builds a relation from explicit parts without schema validation. Used
    /// for generated triples whose predicate is not itself a schema entry.
    pub fn from_parts(
        subject: impl Into<String>,
        subject_type: impl Into<String>,
        predicate: impl Into<String>,
        object_slots: Vec<(String, String)>,
        object_slot_types: Vec<(String, String)>,
    ) -> Result<Relation> {
        if object_slots.is_empty() {
            return Err(Error::invalid("relation has no object slots"));
        }
        let mut seen: Vec<&str> = Vec::new();
        for (key, _) in &object_slots {
            if seen.contains(&key.as_str()) {
                return Err(Error::invalid(format!("duplicate slot key {key:?}")));
            }
            seen.push(key);
        }
        Ok(Relation {
            subject: subject.into(),
            subject_type: subject_type.into(),
            predicate: predicate.into(),
            object_slots,
            object_slot_types,
        })
    }

    pub fn slots(&self) -> &[(String, String)] {
        &self.object_slots
    }

    pub fn slot_types(&self) -> &[(String, String)] {
        &self.object_slot_types
    }

    pub fn slot_count(&self) -> usize {
        self.object_slots.len()
    }

    pub fn is_single_slot(&self) -> bool {
        self.object_slots.len() == 1
    }

    /// Value of the pivot slot (the first slot).
    pub fn pivot_value(&self) -> &str {
        &self.object_slots[0].1
    }

    fn single_slot_value(&self) -> Result<(&str, &str)> {
        if !self.is_single_slot() {
            return Err(Error::invalid(format!(
                "expected a single-slot triple, got {} slots for ({}, {})",
                self.object_slots.len(),
                self.subject,
                self.predicate
            )));
        }
        let ty = self
            .object_slot_types
            .first()
            .map(|(_, t)| t.as_str())
            .unwrap_or_default();
        Ok((&self.object_slots[0].1, ty))
    }
}

/// One predicate's declaration: subject type and ordered object slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaEntry {
    pub predicate: String,
    pub subject_type: String,
    /// `(slot key, type)`, pivot first.
    pub slots: Vec<(String, String)>,
}

/// The predefined predicates with their subject and object slot types.
#[derive(Debug, Clone, Default)]
pub struct SchemaSet {
    entries: Vec<SchemaEntry>,
    by_predicate: HashMap<String, usize>,
    /// Non-pivot slot key -> indexes of entries declaring it.
    by_slot_key: HashMap<String, Vec<usize>>,
}

impl SchemaSet {
    /// Validates and indexes a set of entries.
    ///
    /// Rejects predicates or slot keys containing the generated-predicate
    /// separator, and slot keys that collide with predicate names: either
    /// would make disintegrated triples ambiguous to parse back.
    pub fn new(raw: Vec<SchemaEntry>) -> Result<SchemaSet> {
        let mut entries = Vec::with_capacity(raw.len());
        let mut by_predicate = HashMap::new();
        let mut by_slot_key: HashMap<String, Vec<usize>> = HashMap::new();
        for mut entry in raw {
            if entry.predicate.is_empty() {
                return Err(Error::schema("empty predicate"));
            }
            if entry.predicate.contains(PREDICATE_SEPARATOR) {
                return Err(Error::schema(format!(
                    "predicate {:?} contains the reserved separator {PREDICATE_SEPARATOR:?}",
                    entry.predicate
                )));
            }
            let mut keys: Vec<&str> = Vec::new();
            for (key, _) in &entry.slots {
                if key != PIVOT_SLOT && key.contains(PREDICATE_SEPARATOR) {
                    return Err(Error::schema(format!(
                        "slot key {key:?} contains the reserved separator {PREDICATE_SEPARATOR:?}"
                    )));
                }
                if keys.contains(&key.as_str()) {
                    return Err(Error::schema(format!(
                        "duplicate slot key {key:?} in predicate {:?}",
                        entry.predicate
                    )));
                }
                keys.push(key);
            }
            if !entry.slots.iter().any(|(k, _)| k == PIVOT_SLOT) {
                return Err(Error::schema(format!(
                    "predicate {:?} has no {PIVOT_SLOT} slot",
                    entry.predicate
                )));
            }
            // canonical order: pivot first, remaining slots as declared
            entry.slots.sort_by_key(|(k, _)| k != PIVOT_SLOT);
            if by_predicate.contains_key(&entry.predicate) {
                return Err(Error::schema(format!("duplicate predicate {:?}", entry.predicate)));
            }
            by_predicate.insert(entry.predicate.clone(), entries.len());
            entries.push(entry);
        }
        for (idx, entry) in entries.iter().enumerate() {
            for (key, _) in entry.slots.iter().skip(1) {
                if by_predicate.contains_key(key) {
                    return Err(Error::schema(format!(
                        "slot key {key:?} collides with a predicate name"
                    )));
                }
                by_slot_key.entry(key.clone()).or_default().push(idx);
            }
        }
        Ok(SchemaSet { entries, by_predicate, by_slot_key })
    }

    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn entry(&self, predicate: &str) -> Result<&SchemaEntry> {
        self.by_predicate
            .get(predicate)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| Error::schema(format!("unknown predicate {predicate:?}")))
    }

    pub fn contains(&self, predicate: &str) -> bool {
        self.by_predicate.contains_key(predicate)
    }

    fn is_secondary_slot_key(&self, key: &str) -> bool {
        self.by_slot_key.contains_key(key)
    }
}

/// Rewrites a multi-slot relation into its 2m-1 single-slot triples.
///
/// The pivot value forms `{s, p, v1}`; every further slot `(k_i, v_i)` forms
/// `{s, p-k_i, v_i}` and `{v1, k_i, v_i}`, in slot order.
pub fn disintegrate(r: &Relation, schema: &SchemaSet) -> Result<Vec<Relation>> {
    if r.slots().is_empty() {
        return Err(Error::invalid("relation has no object slots"));
    }
    let entry = schema.entry(&r.predicate)?;
    for (key, _) in r.slots() {
        if !entry.slots.iter().any(|(k, _)| k == key) {
            return Err(Error::schema(format!(
                "slot {key:?} is not declared for predicate {:?}",
                r.predicate
            )));
        }
    }
    if r.slots()[0].0 != PIVOT_SLOT {
        return Err(Error::schema(format!(
            "relation ({}, {}) is not in canonical slot order",
            r.subject, r.predicate
        )));
    }

    let (pivot_key, pivot_value) = (&r.object_slots[0].0, &r.object_slots[0].1);
    let pivot_type = &r.object_slot_types[0].1;
    let mut out = Vec::with_capacity(2 * r.slot_count() - 1);
    out.push(Relation::from_parts(
        r.subject.clone(),
        r.subject_type.clone(),
        r.predicate.clone(),
        vec![(pivot_key.clone(), pivot_value.clone())],
        vec![(pivot_key.clone(), pivot_type.clone())],
    )?);
    for idx in 1..r.slot_count() {
        let (key, value) = &r.object_slots[idx];
        let (_, ty) = &r.object_slot_types[idx];
        out.push(Relation::from_parts(
            r.subject.clone(),
            r.subject_type.clone(),
            format!("{}{}{}", r.predicate, PREDICATE_SEPARATOR, key),
            vec![(PIVOT_SLOT.to_string(), value.clone())],
            vec![(PIVOT_SLOT.to_string(), ty.clone())],
        )?);
        out.push(Relation::from_parts(
            pivot_value.clone(),
            pivot_type.clone(),
            key.clone(),
            vec![(PIVOT_SLOT.to_string(), value.clone())],
            vec![(PIVOT_SLOT.to_string(), ty.clone())],
        )?);
    }
    Ok(out)
}

/// How much evidence a secondary slot needs before it is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvidenceRule {
    /// Either generated form of the slot is enough.
    #[default]
    Either,
    /// Both generated forms must corroborate the same value.
    Both,
}

#[derive(Default)]
struct SlotEvidence {
    /// Values from `{s, p-k, v}` triples, in appearance order.
    from_subject: Vec<String>,
    /// Values from `{v1, k, v}` triples, in appearance order.
    from_pivot: Vec<String>,
}

/// Reassembles multi-slot relations from single-slot triples.
///
/// Triples are grouped by (subject, predicate, pivot value); a group is
/// emitted once its primary triple `{s, p, v1}` is present. For each
/// secondary slot the corroborated value (present in both generated forms)
/// wins, then the subject-anchored form, then the pivot-anchored form.
/// Single-slot triples of single-slot predicates pass through unchanged.
/// Secondary evidence that never finds a primary triple is dropped with a
/// warning: an absent pivot leaves nothing to anchor the relation to.
pub fn recompose(
    triples: &[Relation],
    schema: &SchemaSet,
    rule: EvidenceRule,
) -> Result<Vec<Relation>> {
    // group key -> (subject, predicate, pivot value)
    let mut group_order: Vec<(String, String, String)> = Vec::new();
    let mut groups: HashMap<(String, String, String), usize> = HashMap::new();
    // (subject, base predicate, slot key) -> evidence from `{s, p-k, v}`
    let mut subject_evidence: HashMap<(String, String, String), Vec<String>> = HashMap::new();
    // (pivot value, slot key) -> evidence from `{v1, k, v}`
    let mut pivot_evidence: HashMap<(String, String), Vec<String>> = HashMap::new();
    let mut passthrough: Vec<(usize, Relation)> = Vec::new();
    let mut order_of: HashMap<(String, String, String), usize> = HashMap::new();

    for (pos, triple) in triples.iter().enumerate() {
        let (value, _) = triple.single_slot_value()?;
        let value = value.to_string();
        let predicate = triple.predicate.as_str();
        if let Some(sep) = predicate.find(PREDICATE_SEPARATOR) {
            let (base, key) = (&predicate[..sep], &predicate[sep + 1..]);
            let entry = schema.entry(base).map_err(|_| {
                Error::schema(format!(
                    "generated predicate {predicate:?} has unknown base {base:?}"
                ))
            })?;
            if !entry.slots.iter().skip(1).any(|(k, _)| k == key) {
                return Err(Error::schema(format!(
                    "generated predicate {predicate:?} names {key:?}, which is not a secondary slot of {base:?}"
                )));
            }
            subject_evidence
                .entry((triple.subject.clone(), base.to_string(), key.to_string()))
                .or_default()
                .push(value);
        } else if schema.contains(predicate) {
            let entry = schema.entry(predicate)?;
            if entry.slots.len() == 1 {
                let rebuilt = Relation::new(
                    triple.subject.clone(),
                    predicate,
                    &[(PIVOT_SLOT.to_string(), value)],
                    schema,
                )?;
                passthrough.push((pos, rebuilt));
            } else {
                let key = (triple.subject.clone(), predicate.to_string(), value);
                if !groups.contains_key(&key) {
                    groups.insert(key.clone(), group_order.len());
                    order_of.insert(key.clone(), pos);
                    group_order.push(key);
                }
            }
        } else if schema.is_secondary_slot_key(predicate) {
            pivot_evidence
                .entry((triple.subject.clone(), predicate.to_string()))
                .or_default()
                .push(value);
        } else {
            return Err(Error::schema(format!("unknown predicate {predicate:?}")));
        }
    }

    let mut consumed_subject: std::collections::HashSet<(String, String, String)> =
        std::collections::HashSet::new();
    let mut consumed_pivot: std::collections::HashSet<(String, String)> =
        std::collections::HashSet::new();
    let mut emitted: Vec<(usize, Relation)> = Vec::with_capacity(group_order.len());
    for key @ (subject, predicate, pivot_value) in &group_order {
        let entry = schema.entry(predicate)?;
        let mut slots = vec![(PIVOT_SLOT.to_string(), pivot_value.clone())];
        for (slot_key, _) in entry.slots.iter().skip(1) {
            let mut evidence = SlotEvidence::default();
            let skey = (subject.clone(), predicate.clone(), slot_key.clone());
            if let Some(vs) = subject_evidence.get(&skey) {
                evidence.from_subject = vs.clone();
                consumed_subject.insert(skey);
            }
            let pkey = (pivot_value.clone(), slot_key.clone());
            if let Some(vs) = pivot_evidence.get(&pkey) {
                evidence.from_pivot = vs.clone();
                consumed_pivot.insert(pkey);
            }
            let corroborated = evidence
                .from_subject
                .iter()
                .find(|v| evidence.from_pivot.contains(v));
            let chosen = match rule {
                EvidenceRule::Both => corroborated,
                EvidenceRule::Either => corroborated
                    .or_else(|| evidence.from_subject.first())
                    .or_else(|| evidence.from_pivot.first()),
            };
            if let Some(v) = chosen {
                slots.push((slot_key.clone(), v.clone()));
            }
        }
        let relation = Relation::new(subject.clone(), predicate.clone(), &slots, schema)?;
        emitted.push((order_of[key], relation));
    }

    // evidence keys never touched by a group are orphans whose pivot never arrived
    let orphans = subject_evidence.len() - consumed_subject.len() + pivot_evidence.len()
        - consumed_pivot.len();
    if orphans > 0 {
        log::warn!("recompose: dropped {orphans} orphan secondary-slot evidence group(s) with no primary triple");
    }

    emitted.extend(passthrough);
    emitted.sort_by_key(|(pos, _)| *pos);
    let mut out: Vec<Relation> = Vec::with_capacity(emitted.len());
    for (_, r) in emitted {
        if !out.contains(&r) {
            out.push(r);
        }
    }
    Ok(out)
}
