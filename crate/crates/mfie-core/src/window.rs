//! Sliding-window segmentation of long documents and the merge of
//! per-segment spans back into document coordinates.
//!
//! Units are characters: the corpora are Chinese and the window plays the
//! role of an encoder length budget. Windows are clamped at the document end,
//! never padded, so the union of segments is exactly the document.

use crate::error::{Error, Result};
use crate::pointer::TypedSpan;

/// A windowed slice of a document, with its character offset into the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub doc_id: String,
    /// Character index of the first character in the source document.
    pub start_offset: usize,
    pub text: String,
}

impl Segment {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// Splits a document into overlapping segments of at most `window` characters
/// starting every `stride` characters. The final segment is clamped so it
/// ends exactly at the document end; a document shorter than the window
/// yields a single segment.
pub fn split(doc_id: &str, text: &str, window: usize, stride: usize) -> Result<Vec<Segment>> {
    if window == 0 {
        return Err(Error::invalid("window must be positive"));
    }
    if stride == 0 || stride > window {
        return Err(Error::invalid(format!(
            "stride {stride} out of range 1..={window}: gaps would drop text"
        )));
    }
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    let mut segments = Vec::new();
    let mut start = 0usize;
    loop {
        let end = (start + window).min(len);
        segments.push(Segment {
            doc_id: doc_id.to_string(),
            start_offset: start,
            text: chars[start..end].iter().collect(),
        });
        if end >= len {
            break;
        }
        start = (start + stride).min(len - window);
    }
    Ok(segments)
}

/// Shifts per-segment spans into document coordinates, deduplicates exact
/// repeats from overlapping windows, and resolves conflicting overlapping
/// same-type spans by higher score, then longer span, then smaller start.
/// Output is sorted by (start, end, type).
pub fn merge(per_segment: &[(Segment, Vec<TypedSpan>)]) -> Result<Vec<TypedSpan>> {
    let mut shifted: Vec<TypedSpan> = Vec::new();
    for (segment, spans) in per_segment {
        let seg_len = segment.char_len();
        for span in spans {
            if span.start > span.end || span.end >= seg_len {
                return Err(Error::data(format!(
                    "span {}..{} exceeds segment of {} chars (doc {})",
                    span.start, span.end, seg_len, segment.doc_id
                )));
            }
            shifted.push(TypedSpan {
                type_index: span.type_index,
                start: span.start + segment.start_offset,
                end: span.end + segment.start_offset,
                score: span.score,
            });
        }
    }

    // exact duplicates keep their best score
    shifted.sort_by(|a, b| {
        (a.type_index, a.start, a.end)
            .cmp(&(b.type_index, b.start, b.end))
            .then(b.score.total_cmp(&a.score))
    });
    shifted.dedup_by(|next, kept| {
        (kept.type_index, kept.start, kept.end) == (next.type_index, next.start, next.end)
    });

    // same-type overlap conflicts: greedy accept by (score desc, longer, earlier)
    shifted.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (b.end - b.start).cmp(&(a.end - a.start)))
            .then_with(|| a.start.cmp(&b.start))
            .then_with(|| a.type_index.cmp(&b.type_index))
    });
    let mut accepted: Vec<TypedSpan> = Vec::new();
    for span in shifted {
        let conflict = accepted.iter().any(|kept| {
            kept.type_index == span.type_index && kept.start <= span.end && span.start <= kept.end
        });
        if !conflict {
            accepted.push(span);
        }
    }
    accepted.sort_by(|a, b| {
        (a.start, a.end, a.type_index).cmp(&(b.start, b.end, b.type_index))
    });
    Ok(accepted)
}
