//! Memory-read examples.
//!
//! Full entity mentions are scanned in reading order. For each target
//! mention, document triples involving the target whose other entity has
//! already been seen (and that were not used before) become queries with the
//! target slot open. Queries are run against the memory; those with more than
//! `q_thr` results are dropped. The remaining queries are sorted by result
//! count and the first three form a read call placed right before the target
//! mention. An empty merged result is replaced by the target itself.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::document::{char_slice, AnnotatedDocument, SanitizeLog};
use super::DatagenError;
use crate::protocol::{sanitize_name, serialize_read_open, serialize_results, CALL_OPEN};
use crate::retrieval::{execute_query, AmbiguityList, MemoryQuery, RetrievalThresholds};
use crate::store::MemoryStore;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeenScope {
    /// Seen triples and entities carry over between documents.
    #[default]
    Corpus,
    /// Seen state is reset for every document.
    Document,
}

#[derive(Debug, Clone)]
pub struct ReadGenConfig {
    pub thresholds: RetrievalThresholds,
    pub ambiguity: AmbiguityList,
    pub filter_ambiguous: bool,
    pub seen_scope: SeenScope,
    pub max_queries: usize,
}

impl Default for ReadGenConfig {
    fn default() -> Self {
        Self {
            thresholds: RetrievalThresholds::default(),
            ambiguity: AmbiguityList::default(),
            filter_ambiguous: true,
            seen_scope: SeenScope::Corpus,
            max_queries: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeenState {
    pub triples: HashSet<(String, String, String)>,
    pub entities: HashSet<String>,
}

/// One training instance around a single read call.
///
/// The full text is `pretext + call_text + results_text + posttext`. Loss
/// applies to the call and the posttext, and to the pretext only when
/// `loss_on_pretext` is set (the document's first read). The results are
/// never trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
    pub target: String,
    /// Character offset of the target mention in the document text.
    pub read_position: usize,
    /// Document text before the read, followed by `(\{`.
    pub pretext: String,
    /// `MEM_READ(...)-->`
    pub call_text: String,
    /// `e1,e2,...\})`
    pub results_text: String,
    /// Text up to the next read (followed by `(\{`) or to the end.
    pub posttext: String,
    pub queries: Vec<MemoryQuery>,
    /// Raw result count of each kept query.
    pub query_result_counts: Vec<usize>,
    pub results: Vec<String>,
    pub loss_on_pretext: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Pretext,
    Call,
    Results,
    Posttext,
}

impl ReadExample {
    pub fn text(&self) -> String {
        [
            self.pretext.as_str(),
            &self.call_text,
            &self.results_text,
            &self.posttext,
        ]
        .concat()
    }

    /// Segments with their character ranges in [`ReadExample::text`].
    pub fn segments(&self) -> [(Segment, std::ops::Range<usize>); 4] {
        let a = self.pretext.chars().count();
        let b = a + self.call_text.chars().count();
        let c = b + self.results_text.chars().count();
        let d = c + self.posttext.chars().count();
        [
            (Segment::Pretext, 0..a),
            (Segment::Call, a..b),
            (Segment::Results, b..c),
            (Segment::Posttext, c..d),
        ]
    }

    pub fn has_loss(&self, segment: Segment) -> bool {
        match segment {
            Segment::Pretext => self.loss_on_pretext,
            Segment::Call | Segment::Posttext => true,
            Segment::Results => false,
        }
    }

    /// Character ranges that carry loss.
    pub fn loss_spans(&self) -> Vec<std::ops::Range<usize>> {
        self.segments()
            .into_iter()
            .filter(|(s, r)| self.has_loss(*s) && !r.is_empty())
            .map(|(_, r)| r)
            .collect()
    }
}

/// A query built for one target, before selection.
#[derive(Debug, Clone)]
struct Candidate {
    query: MemoryQuery,
    results: Vec<String>,
    raw_count: usize,
}

/// Generates read examples for one document, updating `seen`.
///
/// Entity and result names are passed through the reserved-substring
/// sanitizer; changes are recorded in `log`.
pub fn generate_read_examples(
    doc: &AnnotatedDocument,
    memory: &MemoryStore,
    config: &ReadGenConfig,
    seen: &mut SeenState,
    log: &mut SanitizeLog,
) -> Result<Vec<ReadExample>, DatagenError> {
    let doc = doc.sanitized(log);
    let text = doc.text();
    let mut examples: Vec<ReadExample> = Vec::new();

    for (pos, mention) in doc.mentions_in_order() {
        if !mention.full {
            continue;
        }
        let target = mention.entity.as_str();
        let mut candidates: Vec<Candidate> = Vec::new();
        for t in &doc.triples {
            if t.subject != target && t.object != target {
                continue;
            }
            let key = t.key();
            if seen.triples.contains(&key) {
                continue;
            }
            let query = if t.object == target && t.subject != target {
                MemoryQuery::object(&t.subject, &t.relation)
            } else {
                MemoryQuery::subject(&t.relation, &t.object)
            };
            if !seen.entities.contains(&query.entity) {
                continue;
            }
            seen.triples.insert(key);
            if candidates.iter().any(|c| c.query == query) {
                continue;
            }
            if config.filter_ambiguous && config.ambiguity.is_ambiguous(&query) {
                continue;
            }
            let r = execute_query(memory, &query, &config.thresholds)?;
            if r.overflowed || r.raw_count > config.thresholds.q_thr {
                continue;
            }
            candidates.push(Candidate {
                query,
                results: r.names().into_iter().map(str::to_string).collect(),
                raw_count: r.raw_count,
            });
        }

        if !candidates.is_empty() {
            candidates.sort_by_key(|c| c.raw_count);
            candidates.truncate(config.max_queries);
            let mut results: Vec<String> = Vec::new();
            for c in &candidates {
                for name in &c.results {
                    let clean = sanitize_name(name);
                    if clean.as_deref() != Some(name.as_str()) {
                        log.insert(name.clone(), clean.clone());
                    }
                    if let Some(n) = clean {
                        if !results.contains(&n) {
                            results.push(n);
                        }
                    }
                }
            }
            if results.is_empty() {
                results.push(target.to_string());
            }
            let queries: Vec<MemoryQuery> = candidates.iter().map(|c| c.query.clone()).collect();
            let open = serialize_read_open(&queries)?;
            if let Some(prev) = examples.last_mut() {
                prev.posttext = format!(
                    "{}{CALL_OPEN}",
                    char_slice(&text, prev.read_position, Some(pos))
                );
            }
            examples.push(ReadExample {
                doc: doc.id.clone(),
                target: target.to_string(),
                read_position: pos,
                pretext: format!("{}{CALL_OPEN}", char_slice(&text, 0, Some(pos))),
                call_text: open[CALL_OPEN.len()..].to_string(),
                results_text: serialize_results(&results)?,
                posttext: String::new(),
                query_result_counts: candidates.iter().map(|c| c.raw_count).collect(),
                queries,
                results,
                loss_on_pretext: examples.is_empty(),
            });
        }
        seen.entities.insert(target.to_string());
    }

    if let Some(last) = examples.last_mut() {
        last.posttext = char_slice(&text, last.read_position, None).to_string();
    }
    Ok(examples)
}

/// Runs [`generate_read_examples`] over a corpus, honouring `seen_scope`.
pub fn generate_read_corpus(
    docs: &[AnnotatedDocument],
    memory: &MemoryStore,
    config: &ReadGenConfig,
) -> Result<(Vec<ReadExample>, SanitizeLog), DatagenError> {
    let mut seen = SeenState::default();
    let mut log = SanitizeLog::new();
    let mut out = Vec::new();
    for doc in docs {
        if config.seen_scope == SeenScope::Document {
            seen = SeenState::default();
        }
        out.extend(generate_read_examples(
            doc, memory, config, &mut seen, &mut log,
        )?);
    }
    Ok((out, log))
}
