//! Removal of memory-read calls that are no longer useful.
//!
//! The most recent completed read call is removed when
//! (i) its result list is empty,
//! (ii) it holds more than `q_thr` results, or
//! (iii) a new read call starts after it.

use std::ops::Range;

use super::stream::{EventKind, ParserConfig, StreamEvent, StreamParser};
use crate::retrieval::RetrievalThresholds;

/// Byte range of the last completed read call starting at or after `from`.
fn last_completed_read(context: &str, from: usize) -> Option<Range<usize>> {
    let mut parser = StreamParser::new(ParserConfig::default());
    let events = parser.feed(context);
    let span = events.iter().rev().find_map(|e| match &e.kind {
        EventKind::ReadCallClosed { call_span, .. } => Some(call_span.clone()),
        _ => None,
    })?;
    let mut starts = context
        .char_indices()
        .map(|(b, _)| b)
        .chain([context.len()]);
    let start = starts.nth(span.start)?;
    let end = starts.nth(span.end - span.start - 1)?;
    (start >= from).then_some(start..end)
}

/// The byte range [`rewrite_context`] would delete, ignoring calls that start before `protected`.
pub fn rewrite_plan_from(
    context: &str,
    event: &StreamEvent,
    thresholds: &RetrievalThresholds,
    protected: usize,
) -> Option<Range<usize>> {
    match &event.kind {
        EventKind::ReadCallClosed { call, .. } => {
            let n = call.results.as_ref().map_or(0, Vec::len);
            if n == 0 || n > thresholds.q_thr {
                last_completed_read(context, protected)
            } else {
                None
            }
        }
        EventKind::ReadCallStart => last_completed_read(context, protected),
        _ => None,
    }
}

pub fn rewrite_plan(
    context: &str,
    event: &StreamEvent,
    thresholds: &RetrievalThresholds,
) -> Option<Range<usize>> {
    rewrite_plan_from(context, event, thresholds, 0)
}

pub fn rewrite_context_from(
    context: &str,
    event: &StreamEvent,
    thresholds: &RetrievalThresholds,
    protected: usize,
) -> String {
    match rewrite_plan_from(context, event, thresholds, protected) {
        Some(r) => {
            let mut out = String::with_capacity(context.len() - r.len());
            out.push_str(&context[..r.start]);
            out.push_str(&context[r.end..]);
            out
        }
        None => context.to_string(),
    }
}

/// Applies the removal rules after `event`, the latest event parsed from `context`.
pub fn rewrite_context(
    context: &str,
    event: &StreamEvent,
    thresholds: &RetrievalThresholds,
) -> String {
    rewrite_context_from(context, event, thresholds, 0)
}
