//! JSONL record formats for relations, events, and schema files, plus the
//! line-oriented readers and writers the CLI pipelines are built on.
//!
//! All ingested strings are NFC-normalized: the metrics are exact-match over
//! Chinese text, so byte-identical comparisons need one normal form.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::metrics::{Argument, Event};
use crate::schema::{Relation, SchemaEntry, SchemaSet};

/// One SPO entry of a relation record; the object is a slot map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoRecord {
    pub subject: String,
    #[serde(default)]
    pub subject_type: String,
    pub predicate: String,
    pub object: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub object_type: BTreeMap<String, String>,
}

/// One line of a relation file: source text and its SPO list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub text: String,
    #[serde(default)]
    pub spo_list: Vec<SpoRecord>,
}

impl SpoRecord {
    /// Converts to a [`Relation`]. Known predicates are validated and
    /// canonicalized against the schema; generated predicates (from
    /// disintegration) are taken as-is.
    pub fn to_relation(&self, schema: &SchemaSet) -> Result<Relation> {
        if self.object.is_empty() {
            return Err(Error::data(format!(
                "spo ({}, {}) has an empty object map",
                self.subject, self.predicate
            )));
        }
        let slots: Vec<(String, String)> =
            self.object.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        if schema.contains(&self.predicate) {
            Relation::new(self.subject.clone(), self.predicate.clone(), &slots, schema)
        } else {
            let types = slots
                .iter()
                .map(|(k, _)| (k.clone(), self.object_type.get(k).cloned().unwrap_or_default()))
                .collect();
            Relation::from_parts(
                self.subject.clone(),
                self.subject_type.clone(),
                self.predicate.clone(),
                slots,
                types,
            )
        }
    }

    pub fn from_relation(r: &Relation) -> SpoRecord {
        SpoRecord {
            subject: r.subject.clone(),
            subject_type: r.subject_type.clone(),
            predicate: r.predicate.clone(),
            object: r.slots().iter().cloned().collect(),
            object_type: r.slot_types().iter().cloned().collect(),
        }
    }
}

/// One argument of an event record. `alias` holds alternative gold mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentRecord {
    pub role: String,
    pub argument: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alias: Vec<String>,
}

/// One event of an event record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventItem {
    pub event_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<String>,
    #[serde(default)]
    pub arguments: Vec<ArgumentRecord>,
}

/// One line of an event file. Sentence-level records carry `text`;
/// document-level records may add `id` and `title`. Negative samples carry
/// an empty `event_list`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
    #[serde(default)]
    pub event_list: Vec<EventItem>,
}

impl EventItem {
    pub fn to_event(&self) -> Event {
        Event {
            event_type: self.event_type.clone(),
            arguments: self
                .arguments
                .iter()
                .map(|a| {
                    let mut mentions = vec![a.argument.clone()];
                    mentions.extend(a.alias.iter().cloned());
                    Argument { role: a.role.clone(), mentions }
                })
                .collect(),
            trigger: self.trigger.clone(),
        }
    }

    pub fn from_event(e: &Event) -> EventItem {
        EventItem {
            event_type: e.event_type.clone(),
            trigger: e.trigger.clone(),
            arguments: e
                .arguments
                .iter()
                .map(|a| ArgumentRecord {
                    role: a.role.clone(),
                    argument: a.text().to_string(),
                    alias: a.mentions.iter().skip(1).cloned().collect(),
                })
                .collect(),
        }
    }
}

impl EventRecord {
    pub fn events(&self) -> Vec<Event> {
        self.event_list.iter().map(EventItem::to_event).collect()
    }

    /// Title and body joined for document-level processing.
    pub fn full_text(&self) -> String {
        match &self.title {
            Some(title) if !title.is_empty() => format!("{title}\n{}", self.text),
            _ => self.text.clone(),
        }
    }
}

fn nfc(s: &mut String) {
    if !unicode_normalization::is_nfc(s) {
        *s = s.nfc().collect();
    }
}

/// Normalizes every string field of a record to NFC.
pub trait Normalize {
    fn normalize(&mut self);
}

impl Normalize for RelationRecord {
    fn normalize(&mut self) {
        nfc(&mut self.text);
        for spo in &mut self.spo_list {
            nfc(&mut spo.subject);
            nfc(&mut spo.subject_type);
            nfc(&mut spo.predicate);
            let object = std::mem::take(&mut spo.object);
            spo.object = object
                .into_iter()
                .map(|(mut k, mut v)| {
                    nfc(&mut k);
                    nfc(&mut v);
                    (k, v)
                })
                .collect();
            let object_type = std::mem::take(&mut spo.object_type);
            spo.object_type = object_type
                .into_iter()
                .map(|(mut k, mut v)| {
                    nfc(&mut k);
                    nfc(&mut v);
                    (k, v)
                })
                .collect();
        }
    }
}

impl Normalize for EventRecord {
    fn normalize(&mut self) {
        if let Some(id) = &mut self.id {
            nfc(id);
        }
        if let Some(title) = &mut self.title {
            nfc(title);
        }
        nfc(&mut self.text);
        for event in &mut self.event_list {
            nfc(&mut event.event_type);
            if let Some(trigger) = &mut event.trigger {
                nfc(trigger);
            }
            for arg in &mut event.arguments {
                nfc(&mut arg.role);
                nfc(&mut arg.argument);
                for alias in &mut arg.alias {
                    nfc(alias);
                }
            }
        }
    }
}

/// Reads one JSON record per line, reporting the 1-based line number on
/// parse failure. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Reads records and NFC-normalizes them.
pub fn read_jsonl_normalized<T: DeserializeOwned + Normalize>(
    reader: impl BufRead,
) -> Result<Vec<T>> {
    let mut records: Vec<T> = read_jsonl(reader)?;
    for r in &mut records {
        r.normalize();
    }
    Ok(records)
}

/// Writes one JSON record per line.
pub fn write_jsonl<T: Serialize>(mut writer: impl Write, records: &[T]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::data(format!("serialization failed: {e}")))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SchemaFileEntry {
    predicate: String,
    #[serde(default)]
    subject_type: String,
    /// Slot key -> type; file order is the declared slot order.
    object_type: serde_json::Map<String, serde_json::Value>,
}

/// Loads a schema file: one JSON object per line with `predicate`,
/// `subject_type`, and `object_type` (slot key to type string).
pub fn read_schema(reader: impl BufRead) -> Result<SchemaSet> {
    let raw: Vec<SchemaFileEntry> = read_jsonl(reader)?;
    let entries = raw
        .into_iter()
        .map(|e| {
            let slots = e
                .object_type
                .iter()
                .map(|(k, v)| {
                    let ty = v
                        .as_str()
                        .ok_or_else(|| {
                            Error::schema(format!(
                                "predicate {:?}: slot {k:?} type must be a string",
                                e.predicate
                            ))
                        })?
                        .to_string();
                    Ok((k.nfc().collect(), ty.nfc().collect()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SchemaEntry {
                predicate: e.predicate.nfc().collect(),
                subject_type: e.subject_type.nfc().collect(),
                slots,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SchemaSet::new(entries)
}

/// Serializes a schema back to its JSONL form.
pub fn write_schema(mut writer: impl Write, schema: &SchemaSet) -> Result<()> {
    for entry in schema.entries() {
        let mut object_type = serde_json::Map::new();
        for (k, v) in &entry.slots {
            object_type.insert(k.clone(), serde_json::Value::String(v.clone()));
        }
        let line = serde_json::json!({
            "predicate": entry.predicate,
            "subject_type": entry.subject_type,
            "object_type": object_type,
        });
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Converts a relation record's SPO list, validating against the schema.
pub fn record_relations(record: &RelationRecord, schema: &SchemaSet) -> Result<Vec<Relation>> {
    record.spo_list.iter().map(|spo| spo.to_relation(schema)).collect()
}
